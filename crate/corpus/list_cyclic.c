struct node {
    int val;
    struct node *next;
};

// Walk to the last node of an acyclic input list, then close it into a
// cycle. The walk's dereferences ride on the loop's null test; the final
// store must land on a live node.
void test(struct node *head) {
    struct node *p;
    assume(head != 0);
    p = head;
    while (p->next != 0) {
        p = p->next;
    }
    p->next = head;
    assert(p != 0);
}

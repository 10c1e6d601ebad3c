struct node {
    int val;
    struct node *next;
};

// Count the nodes of an acyclic input list. Every dereference is guarded
// by the loop's null check.
void test(struct node *head) {
    struct node *p;
    int c;
    c = 0;
    p = head;
    while (p != 0) {
        c = c + 1;
        p = p->next;
    }
    assert(c >= 0);
}

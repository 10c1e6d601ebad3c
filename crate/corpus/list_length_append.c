struct node {
    int val;
    struct node *next;
};

// Count the list, push one node at the head, and recount: the second count
// must come out exactly one larger. Relating the two walks requires
// tracking both traversals of an unbounded spine.
void test(struct node *head) {
    struct node *p;
    struct node *q;
    int c1;
    int c2;
    c1 = 0;
    p = head;
    while (p != 0) {
        c1 = c1 + 1;
        p = p->next;
    }
    q = malloc(sizeof(struct node));
    q->val = 0;
    q->next = head;
    c2 = 0;
    p = q;
    while (p != 0) {
        c2 = c2 + 1;
        p = p->next;
    }
    assert(c2 == c1 + 1);
}

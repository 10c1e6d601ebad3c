struct node {
    int val;
    struct node *next;
};

// Key search with no null guard on the cursor: an empty list or a missing
// key walks straight off the end.
void test(struct node *head, int k) {
    struct node *p;
    p = head;
    while (p->val != k) {
        p = p->next;
    }
}

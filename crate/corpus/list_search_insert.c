struct node {
    int val;
    struct node *next;
};

// Insert a key at the head, then search for it: the search must succeed.
void test(struct node *head, int k) {
    struct node *p;
    int found;
    p = malloc(sizeof(struct node));
    p->val = k;
    p->next = head;
    head = p;
    found = 0;
    p = head;
    while (p != 0) {
        if (p->val == k) {
            found = 1;
            break;
        }
        p = p->next;
    }
    assert(found == 1);
}

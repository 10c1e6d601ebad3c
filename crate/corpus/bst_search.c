struct tree {
    int key;
    struct tree *left;
    struct tree *right;
};

// Walk down a binary tree following key comparisons. Every dereference
// happens under the loop's non-null guard, and the step counter stays
// non-negative along the unbounded descent.
void test(struct tree *root, int k) {
    struct tree *p;
    int found;
    int steps;
    p = root;
    found = 0;
    steps = 0;
    while (p != 0) {
        if (p->key == k) {
            found = 1;
            break;
        }
        if (k < p->key) {
            p = p->left;
        } else {
            p = p->right;
        }
        steps = steps + 1;
    }
    assert(steps >= 0);
    assert(found == 0 || found == 1);
}

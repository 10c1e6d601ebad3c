struct tree {
    int key;
    struct tree *left;
    struct tree *right;
};

// Attach a fresh key at the first empty child slot the comparison walk
// reaches, then search for it again from the root. The second walk takes
// the same turns as the first, so it must end at the new node (or stop
// early at an equal key already on the path).
void test(struct tree *root, int k) {
    struct tree *q;
    struct tree *p;
    int found;
    q = malloc(sizeof(struct tree));
    q->key = k;
    q->left = 0;
    q->right = 0;
    if (root == 0) {
        root = q;
    } else {
        p = root;
        while (1) {
            if (k < p->key) {
                if (p->left == 0) {
                    p->left = q;
                    break;
                }
                p = p->left;
            } else {
                if (p->right == 0) {
                    p->right = q;
                    break;
                }
                p = p->right;
            }
        }
    }
    found = 0;
    p = root;
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
    }
    assert(found == 1);
}

// Lock-step scan of two equal-length regions for the first mismatch.
// Accesses into the second region are justified only by the assumed
// length equality.
void test(int *a, int n_a, int *b, int n_b) {
    int i;
    assume(n_a == n_b);
    i = 0;
    while (i < n_a) {
        if (a[i] != b[i]) {
            assert(i < n_b);
            return;
        }
        i = i + 1;
    }
}

// Bounded scan for the first zero element. Every access is guarded by the
// hard bound, and the result can never exceed it.
void test(int *s, int n) {
    int i;
    i = 0;
    while (i < n && s[i] != 0) {
        i = i + 1;
    }
    assert(i <= n);
}

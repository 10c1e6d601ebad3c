// Bounded scan with an inclusive bound: the guard admits i == n, so the
// element test can read one past the end of the region.
void test(int *s, int n) {
    int i;
    i = 0;
    while (i <= n && s[i] != 0) {
        i = i + 1;
    }
    assert(i <= n);
}

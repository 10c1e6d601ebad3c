// Unbounded-style scan that relies on a zero sentinel in the last cell.
// The scan itself has no index guard: in-bounds safety of s[i] holds only
// because the sentinel stops the loop before the end of the region.
void test(int *s, int n) {
    int i;
    assume(n >= 1);
    assume(s[n - 1] == 0);
    i = 0;
    while (s[i] != 0) {
        i = i + 1;
    }
    assert(i < n);
}

// Shift-left with a loose bound: at i == n - 1 the source index reaches n,
// one past the end of the region.
void test(int *s, int n) {
    int i;
    for (i = 0; i < n; i++) {
        s[i] = s[i + 1];
    }
}

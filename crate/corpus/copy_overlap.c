// In-place overlapping copy: shift every element left by one. Source and
// destination windows overlap inside one region.
void test(int *s, int n) {
    int i;
    for (i = 0; i + 1 < n; i++) {
        s[i] = s[i + 1];
    }
}

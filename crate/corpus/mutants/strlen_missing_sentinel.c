// Sentinel-free scan: without the trailing zero guarantee the loop can
// run past the end of the region.
void test(int *s, int n) {
    int i;
    assume(n >= 1);
    i = 0;
    while (s[i] != 0) {
        i = i + 1;
    }
    assert(i < n);
}

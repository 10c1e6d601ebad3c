// Off-by-one fill: the loop bound admits i == n, so the last write lands
// one past the end of the region.
void test(int *s, int n) {
    int i;
    for (i = 0; i <= n; i++) {
        s[i] = 0;
    }
    for (i = 0; i < n; i++) {
        assert(s[i] == 0);
    }
}

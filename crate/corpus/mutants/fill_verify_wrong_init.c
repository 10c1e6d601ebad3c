// Wrong fill value: the recheck demands zero but the loop wrote one.
void test(int *s, int n) {
    int i;
    for (i = 0; i < n; i++) {
        s[i] = 1;
    }
    for (i = 0; i < n; i++) {
        assert(s[i] == 0);
    }
}

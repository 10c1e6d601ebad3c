// Fill an array with zeroes, then check that every cell reads back zero.
// The recheck loop has no bounded invariant: proving the assert needs the
// relationship between the two traversals at every index.
void test(int *s, int n) {
    int i;
    for (i = 0; i < n; i++) {
        s[i] = 0;
    }
    for (i = 0; i < n; i++) {
        assert(s[i] == 0);
    }
}

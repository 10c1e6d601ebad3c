// Find the first occurrence of a nonzero key in a sentinel-terminated
// region. The scan is unguarded, like strlen.
void test(int *s, int n, int c) {
    int i;
    assume(n >= 1);
    assume(c != 0);
    assume(s[n - 1] == 0);
    i = 0;
    while (s[i] != 0) {
        if (s[i] == c) {
            assert(i < n);
            return;
        }
        i = i + 1;
    }
}

// Outside the supported subset: unions are not modeled.
union u {
    int a;
    int b;
};

void test(int *s, int n) {
    union u x;
    x.a = 1;
}

#include <cstdio>
int main(){ std::puts("invforge"); return 0; }

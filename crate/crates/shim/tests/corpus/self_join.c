#include <pthread.h>
#include <stdint.h>
#include <stdio.h>

static void *body(void *arg) {
    (void)arg;
    return (void *)(uintptr_t)pthread_join(pthread_self(), NULL);
}

int main(void) {
    printf("main self join %d\n", pthread_join(pthread_self(), NULL));
    pthread_t t;
    void *ret;
    pthread_create(&t, NULL, body, NULL);
    pthread_join(t, &ret);
    printf("thread self join %lu\n", (unsigned long)(uintptr_t)ret);
    return 0;
}

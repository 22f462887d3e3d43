#include <pthread.h>
#include <stdint.h>
#include <stdio.h>

static void *body(void *arg) { return (void *)((uintptr_t)arg * 2); }

int main(void) {
    pthread_t t;
    void *ret = NULL;
    int rc = pthread_create(&t, NULL, body, (void *)21);
    printf("create %d\n", rc);
    rc = pthread_join(t, &ret);
    printf("join %d value %lu\n", rc, (unsigned long)(uintptr_t)ret);
    rc = pthread_create(&t, NULL, body, (void *)5);
    rc |= pthread_join(t, NULL);
    printf("null retval %d\n", rc);
    return 0;
}

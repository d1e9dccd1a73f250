#include <signal.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "buffer.h"
#include "config.h"
#include "log.h"
#include "net.h"
#include "packet.h"
#include "sensor.h"

static void usage(const char *prog)
{
    printf("usage: %s [-v level] [-s] [config-dir]\n", prog);
}

static void handle_signal(int sig)
{
    (void)sig;
    log_close();
    _exit(1);
}

static int parse_args(int argc, char **argv)
{
    int i;

    for (i = 1; i < argc; i++) {
        if (strcmp(argv[i], "-v") == 0 && i + 1 < argc) {
            log_set_level(atoi(argv[++i]));
        } else if (strcmp(argv[i], "-s") == 0) {
            g_strict_mode = 1;
        } else if (argv[i][0] == '-') {
            usage(argv[0]);
            return -1;
        }
    }
    return 0;
}

int run_loop(int iterations)
{
    int g_socket_count = 0; /* dry-run counter, shadows the real one on purpose */
    int i;

    for (i = 0; i < iterations; i++) {
        if (sensor_poll_all() > 0)
            log_write(1, "sensor failures this round");
        g_socket_count++;
    }
    return g_socket_count;
}

int main(int argc, char **argv)
{
    signal(SIGINT, handle_signal);
    if (parse_args(argc, argv) != 0)
        return 1;
    if (log_init(NULL) != 0)
        return 1;
    if (cfg_load("/etc/gateway", "gateway.conf") != 0)
        log_write(1, "config missing, using defaults");
    cfg_defaults();
    run_loop(10);
    log_close();
    return 0;
}

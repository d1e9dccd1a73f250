#include "sensor.h"

#include <string.h>

#include "log.h"

struct gw_sensor g_sensors[GW_MAX_SENSORS];
int g_sensor_count = 0;

int sensor_register(int id, const char *name, sensor_read_fn read)
{
    struct gw_sensor *slot;

    if (g_sensor_count >= GW_MAX_SENSORS)
        return -1;
    slot = &g_sensors[g_sensor_count];
    slot->id = id;
    strncpy(slot->name, name, sizeof(slot->name) - 1);
    slot->name[sizeof(slot->name) - 1] = '\0';
    slot->read = read;
    slot->last_value = 0;
    g_sensor_count++;
    return 0;
}

int sensor_poll_all(void)
{
    int i;
    int value;
    int failures = 0;

    for (i = 0; i < g_sensor_count; i++) {
        if (g_sensors[i].read == NULL)
            continue;
        if (g_sensors[i].read(g_sensors[i].id, &value) != 0) {
            log_write(1, "sensor read failed");
            failures++;
            continue;
        }
        g_sensors[i].last_value = value;
    }
    return failures;
}

int sensor_average(void)
{
    int i;
    int sum = 0;

    if (g_sensor_count == 0)
        return 0;
    for (i = 0; i < g_sensor_count; i++)
        sum += g_sensors[i].last_value;
    return sum / g_sensor_count;
}

const char *sensor_name(int idx)
{
    if (idx < 0 || idx >= g_sensor_count)
        return "?";
    return g_sensors[idx].name;
}

void sensor_reset(void)
{
    memset(g_sensors, 0, sizeof(g_sensors));
    g_sensor_count = 0;
}

#ifndef GW_CONFIG_H
#define GW_CONFIG_H

#include "gateway.h"

int cfg_load(const char *dir, const char *name);
const char *cfg_get(const char *key);
int cfg_set(const char *key, const char *value);
void cfg_defaults(void);
void cfg_free(void);

#endif

#ifndef GW_LOG_H
#define GW_LOG_H

int log_init(const char *path);
void log_write(int level, const char *msg);
void log_set_level(int level);
void log_close(void);

#endif

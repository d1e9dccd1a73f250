/* Growable byte buffer used by the receive path. */

#include "buffer.h"

#include <stdlib.h>
#include <string.h>

unsigned long g_total_allocations = 0;

int buf_init(struct gw_buffer *b, size_t cap)
{
    b->data = malloc(cap);
    if (b->data == NULL)
        return -1;
    b->len = 0;
    b->cap = cap;
    g_total_allocations++;
    return 0;
}

void buf_free(struct gw_buffer *b)
{
    free(b->data);
    b->data = NULL;
    b->len = 0;
    b->cap = 0;
}

int buf_reserve(struct gw_buffer *b, size_t extra)
{
    uint8_t *grown;
    size_t want = b->len + extra;

    if (want <= b->cap)
        return 0;
    grown = realloc(b->data, want);
    if (grown == NULL)
        return -1;
    b->data = grown;
    b->cap = want;
    g_total_allocations++;
    return 0;
}

int buf_append(struct gw_buffer *b, const uint8_t *src, size_t len)
{
    memcpy(b->data + b->len, src, len);
    b->len += len;
    return 0;
}

void buf_clear(struct gw_buffer *b)
{
    b->len = 0;
}

size_t buf_len(const struct gw_buffer *b)
{
    return b->len;
}

int buf_at(const struct gw_buffer *b, size_t idx)
{
    if (idx >= b->len)
        return -1;
    return b->data[idx];
}

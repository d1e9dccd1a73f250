/* Wire format: 1 magic byte, 2 sequence bytes, 2 length bytes, payload. */

#include "packet.h"

#include <string.h>

#include "log.h"
#include "util.h"

#define PKT_MAGIC 0x47
#define PKT_HEADER_BYTES 5

static uint16_t s_last_seq = 0;

static int pkt_seq_gap(uint16_t seq)
{
    int gap = (int)seq - (int)s_last_seq;

    if (gap < 0)
        gap += 65536;
    return gap;
}

int pkt_parse_header(struct gw_packet *pkt, const uint8_t *raw, size_t raw_len)
{
    if (raw_len < PKT_HEADER_BYTES)
        return -1;
    if (raw[0] != PKT_MAGIC)
        return -1;
    pkt->seq = (uint16_t)((raw[1] << 8) | raw[2]);
    pkt->len = (uint16_t)((raw[3] << 8) | raw[4]);
    if (pkt->len > sizeof(pkt->payload))
        return -1;
    if ((size_t)pkt->len + PKT_HEADER_BYTES > raw_len)
        return -1;
    memcpy(pkt->payload, raw + PKT_HEADER_BYTES, pkt->len);
    s_last_seq = pkt->seq;
    return 0;
}

uint16_t pkt_checksum(const struct gw_packet *pkt)
{
    uint16_t sum = util_checksum16(pkt->payload, pkt->len);

    return util_byteswap(sum);
}

int pkt_validate(const struct gw_packet *pkt)
{
    if (pkt->len == 0)
        return g_strict_mode ? -1 : 0;
    if (pkt_seq_gap(pkt->seq) > 1000)
        return -1;
    if (pkt_checksum(pkt) == 0)
        return -1;
    return 0;
}

void pkt_dump(const struct gw_packet *pkt)
{
    log_write(3, "packet dump");
    util_hexdump(pkt->payload, pkt->len);
}

void pkt_reset(struct gw_packet *pkt)
{
    memset(pkt, 0, sizeof(*pkt));
    s_last_seq = 0;
}

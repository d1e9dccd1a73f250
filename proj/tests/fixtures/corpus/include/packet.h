#ifndef GW_PACKET_H
#define GW_PACKET_H

#include "gateway.h"

int pkt_parse_header(struct gw_packet *pkt, const uint8_t *raw, size_t raw_len);
int pkt_validate(const struct gw_packet *pkt);
uint16_t pkt_checksum(const struct gw_packet *pkt);
void pkt_dump(const struct gw_packet *pkt);
void pkt_reset(struct gw_packet *pkt);

#endif

"""Reference model for the golden scenario.

Recomputes table2.csv for crates/core/tests/fixtures/golden from the
documented rules, using only the Python standard library. It shares no code
with the Rust implementation.

    python3 docs/golden/oracle.py crates/core/tests/fixtures/golden
"""

import csv
import math
import sys
from collections import defaultdict
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path

G = 131072
T = 3 * G
F = 3338477
MAX_BLOBS = 6
HEADER = 34
MIN_WIRE = 35
MAX_PAYLOAD = 65535
TX_GAS = 21000
UNLABELED = "UNLABELED"


def fake_exponential(factor, numerator, denominator):
    i = 1
    output = 0
    accum = factor * denominator
    while accum > 0:
        output += accum
        accum = (accum * numerator) // (denominator * i)
        i += 1
    return output // denominator


def fee_series(counts):
    excess = 0
    fees = []
    for c in counts:
        fees.append((excess, fake_exponential(1, excess, F)))
        excess = max(0, excess + c * G - T)
    return fees


def price_units(text):
    whole, _, frac = text.partition(".")
    frac = (frac + "0" * 8)[:8]
    return int(whole) * 10**8 + int(frac)


def cents(usd_units):
    # usd_units is wei * price units, i.e. 1e-26 USD
    q, r = divmod(usd_units, 10**24)
    if 2 * r >= 10**24:
        q += 1
    return f"{q // 100}.{q % 100:02d}"


def ratio(num, den, places):
    value = (Fraction(num, den) * 10**places)
    q, r = divmod(value.numerator, value.denominator)
    if 2 * r >= value.denominator:
        q += 1
    s = str(q).rjust(places + 1, "0")
    return f"{s[:-places]}.{s[-places:]}"


def quality(blocks):
    if len(blocks) < 2:
        return "NA"
    gap = (blocks[-1] - blocks[0]) / (len(blocks) - 1)
    q = 1.0 / (math.log(gap) + 1.0)
    return str(Decimal(repr(q)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def spread(total, first, last):
    n = last - first + 1
    return {first + k - 1: (k * total) // n - ((k - 1) * total) // n for k in range(1, n + 1)}


def allocate(amount, weights):
    total = sum(weights)
    if total == 0:
        return [0] * len(weights)
    exact = [Fraction(amount * w, total) for w in weights]
    shares = []
    for e in exact:
        fl = math.floor(e)
        shares.append(fl + 1 if e - fl >= Fraction(1, 2) and e != fl else fl)
    diff = amount - sum(shares)
    rem = [e - math.floor(e) for e in exact]
    if diff > 0:
        cands = sorted((i for i in range(len(weights)) if shares[i] == math.floor(exact[i])), key=lambda i: (-rem[i], i))
        for i in cands[:diff]:
            shares[i] += 1
    elif diff < 0:
        cands = sorted((i for i in range(len(weights)) if shares[i] > exact[i]), key=lambda i: (rem[i], -i))
        for i in cands[:-diff]:
            shares[i] -= 1
    assert sum(shares) == amount
    return shares


class Pool:
    def __init__(self, labels):
        self.labels = labels
        self.pending = {l: 0 for l in labels}
        self.cursor = 0

    def order(self):
        n = len(self.labels)
        return [self.labels[(self.cursor + i) % n] for i in range(n)]

    def try_full(self):
        room = 131072
        entries = []
        left = dict(self.pending)
        for pos, label in enumerate(self.order()):
            while left[label] > 0 and room > 0:
                want = min(left[label], MAX_PAYLOAD)
                if HEADER + want >= room:
                    take = room - HEADER  # closes the blob
                elif room - HEADER - want >= MIN_WIRE:
                    take = want
                elif room >= 2 * MIN_WIRE:
                    take = room - HEADER - MIN_WIRE  # leave room for one minimal entry
                else:
                    break
                entries.append((label, take))
                left[label] -= take
                room -= HEADER + take
            if room == 0:
                idx = self.labels.index(label)
                self.cursor = idx if left[label] > 0 else (idx + 1) % len(self.labels)
                self.pending = left
                return entries
        return None

    def take_partial(self):
        room = 131072
        entries = []
        left = dict(self.pending)
        nxt = self.cursor
        for label in self.order():
            while left[label] > 0 and room >= MIN_WIRE:
                take = min(left[label], MAX_PAYLOAD, room - HEADER)
                entries.append((label, take))
                left[label] -= take
                room -= HEADER + take
            if left[label] > 0:
                nxt = self.labels.index(label)
                break
        if not entries:
            return None
        self.pending = left
        self.cursor = nxt
        return entries


def main(folder):
    folder = Path(folder)
    subs = [
        (int(r["block_number"]), int(r["tx_index"]), int(r["blob_index"]), r["rollup_label"], int(r["stripped_size"]))
        for r in csv.DictReader(open(folder / "submissions.csv"))
    ]
    subs.sort()
    blocks = {int(r["block_number"]): r for r in csv.DictReader(open(folder / "blocks.csv"))}
    prices = [(int(r["timestamp"]), price_units(r["usd_per_eth"])) for r in csv.DictReader(open(folder / "prices.csv"))]
    start, end = 100, 119
    window = list(range(start, end + 1))

    def price_at(block):
        ts = int(blocks[block]["timestamp"])
        return [p for t, p in prices if t <= ts][-1]

    def exec_fees(block):
        b = blocks[block]
        return TX_GAS * int(b["base_fee_per_gas"]), TX_GAS * int(b["median_priority_fee"])

    counts = [sum(1 for s in subs if s[0] == b) for b in window]
    real_fees = fee_series(counts)

    labels = sorted({s[3] for s in subs if s[3] != UNLABELED})
    real = {l: {"blob": 0, "base": 0, "prio": 0, "usd": 0} for l in labels}
    groups = defaultdict(int)
    for s in subs:
        if s[3] != UNLABELED:
            groups[(s[0], s[3])] += 1
    for (block, label), n in sorted(groups.items()):
        fee = real_fees[block - start][1]
        base, prio = exec_fees(block)
        blob = n * G * fee
        r = real[label]
        r["blob"] += blob
        r["base"] += base
        r["prio"] += prio
        r["usd"] += (blob + base + prio) * price_at(block)

    # production schedule
    produced = defaultdict(lambda: defaultdict(int))
    for label in labels:
        per_block = defaultdict(int)
        for s in subs:
            if s[3] == label:
                per_block[s[0]] += s[4]
        points = sorted((b, v) for b, v in per_block.items() if v > 0)
        prev = None
        for b, v in points:
            first = prev + 1 if prev is not None else (start if b == start else start + 1)
            for blk, amount in spread(v, first, b).items():
                produced[blk][label] += amount
            prev = b

    unlabeled = [sum(1 for s in subs if s[0] == b and s[3] == UNLABELED) for b in window]
    pool = Pool(labels)
    queue = []
    seq = 0
    excess = 0
    events = []
    block = start
    while True:
        in_window = block <= end
        if in_window:
            for label, amount in produced[block].items():
                pool.pending[label] += amount
        while True:
            e = pool.try_full()
            if e is None:
                break
            queue.append((seq, block, e))
            seq += 1
        if block == end:
            while True:
                e = pool.take_partial()
                if e is None:
                    break
                queue.append((seq, block, e))
                seq += 1
        u = unlabeled[block - start] if in_window else 0
        room = MAX_BLOBS - u
        shared, queue = queue[:room], queue[room:]
        fee = fake_exponential(1, excess, F)
        events.append((block, shared, fee))
        excess = max(0, excess + (u + len(shared)) * G - T)
        if block >= end and not queue:
            break
        block += 1

    sim = {l: {"blob": 0, "base": 0, "prio": 0, "usd": 0, "payload": 0, "wire": 0, "blocks": []} for l in labels}
    for block, shared, fee in events:
        if not shared:
            continue
        ctx_block = min(block, end)
        base, prio = exec_fees(ctx_block)
        price = price_at(ctx_block)
        block_w = {l: 0 for l in labels}
        for _, _, entries in shared:
            blob_w = {l: 0 for l in labels}
            for label, n in entries:
                blob_w[label] += HEADER + n
                block_w[label] += HEADER + n
                sim[label]["payload"] += n
                sim[label]["wire"] += HEADER + n
            for label, a in zip(labels, allocate(G * fee, [blob_w[l] for l in labels])):
                sim[label]["blob"] += a
                sim[label]["usd"] += a * price
        for key, amount in (("base", base), ("prio", prio)):
            for label, a in zip(labels, allocate(amount, [block_w[l] for l in labels])):
                sim[label][key] += a
                sim[label]["usd"] += a * price
        for label in labels:
            if block_w[label] > 0:
                sim[label]["blocks"].append(block)

    header = [
        "rollup", "real_cost_usd", "real_size_gb", "real_da_quality", "sim_cost_usd", "sim_size_gb",
        "sim_da_quality", "real_blob_fee_wei", "real_base_fee_wei", "real_priority_fee_wei", "real_total_wei",
        "sim_blob_fee_wei", "sim_base_fee_wei", "sim_priority_fee_wei", "sim_total_wei", "real_blob_count",
        "real_bytes", "sim_payload_bytes", "sim_wire_bytes",
    ]
    rows = []
    for label in labels:
        mine = [s for s in subs if s[3] == label]
        real_blocks = sorted({s[0] for s in mine})
        real_bytes = sum(s[4] for s in mine)
        r, m = real[label], sim[label]
        rows.append((
            -r["usd"],
            label,
            [
                label, cents(r["usd"]), ratio(real_bytes, 1024**3, 3), quality(real_blocks),
                cents(m["usd"]), ratio(m["wire"], 1024**3, 3), quality(m["blocks"]),
                r["blob"], r["base"], r["prio"], r["blob"] + r["base"] + r["prio"],
                m["blob"], m["base"], m["prio"], m["blob"] + m["base"] + m["prio"],
                len(mine), real_bytes, m["payload"], m["wire"],
            ],
        ))
    rows.sort(key=lambda t: (t[0], t[1]))
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(header)
    for _, _, row in rows:
        out.writerow(row)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")

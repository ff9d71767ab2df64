#!/usr/bin/env python3
"""Hand-rolled 3-level binary hash tree over 8 leaves with 0x00/0x01 domain tags."""
import hashlib


def h(b):
    return hashlib.sha256(b).digest()


leaves = [bytes([i]) * (i + 1) for i in range(8)]
level = [h(b"\x00" + leaf) for leaf in leaves]
l1 = [h(b"\x01" + level[2 * i] + level[2 * i + 1]) for i in range(4)]
l2 = [h(b"\x01" + l1[2 * i] + l1[2 * i + 1]) for i in range(2)]
root = h(b"\x01" + l2[0] + l2[1])
print(root.hex())

# ragged: 5 leaves, arity 3 -> level sizes 5, 2, 1
leaves5 = [b"leaf-%d" % i for i in range(5)]
d = [h(b"\x00" + x) for x in leaves5]
p = [h(b"\x01" + d[0] + d[1] + d[2]), h(b"\x01" + d[3] + d[4])]
print(h(b"\x01" + p[0] + p[1]).hex())
print(hashlib.sha256(b"").hexdigest())

"""
Variable-width codes packed into shared segments
=================================================

Quantize a decorrelated matrix with a different bit width per dimension,
then pack every row's codes end to end into fixed-width machine words.
Dimensions with more variance get more bits; the packed layout spends
words on the total bit budget instead of one word per dimension.
"""

import numpy as np

from segann import (
    allocate_bits,
    apply_klt,
    bit_wastage,
    extract_dim,
    fit_klt,
    fit_standardize,
    hamming_distance,
    pack_codes,
    pack_signs,
)
from segann.quantizer import lloyd_1d, quantize_matrix

rng = np.random.default_rng(7)

# correlated data: a few strong directions, lots of weak ones
n, d = 4000, 32
basis = rng.standard_normal((d, d))
scales = np.geomspace(8.0, 0.05, d)
vectors = (rng.standard_normal((n, d)) * scales) @ basis

# rotate into the eigenbasis so per-dimension quantization is effective
klt = fit_klt(vectors)
rotated = apply_klt(klt, vectors)
variances = rotated.var(axis=0)

# spend 4 bits per dimension on average, placed where variance lives
budget = 4 * d
alloc = allocate_bits(variances, budget, segment_bits=8)
print("bit budget:", budget)
print("widths (first 12 dims):", alloc.bits[:12].tolist())
print("dims given zero bits:", int((alloc.bits == 0).sum()))

# one scalar quantizer per dimension, sized by its width
quantizers = [
    lloyd_1d(rotated[:, j], int(2 ** alloc.bits[j])) if alloc.bits[j] > 0 else None
    for j in range(d)
]
live = [q if q is not None else lloyd_1d(rotated[:, 0], 1) for q in quantizers]
codes = quantize_matrix(rotated, live)
codes[:, alloc.bits == 0] = 0

packed = pack_codes(codes, alloc)
print("segments per vector:", packed.segment_count, "(vs", d, "one-word-per-dim)")
print("padding bits in the last segment:", packed.padding_bits)

# wastage: bits bought but never used by a code
print("wastage, one word per dim:", bit_wastage(alloc, "word"))
print("wastage, shared segments: ", bit_wastage(alloc, "segmented"))

# unpacking any single dimension reproduces the original codes exactly
j = int(np.argmax(alloc.bits))
back = extract_dim(packed, alloc, j)
assert np.array_equal(back, codes[:, j])
print("round-trip on the widest dim (width %d): ok" % alloc.bits[j])

# sign sketches: one bit per dimension, compared by hamming distance
std = fit_standardize(rotated)
signs = pack_signs(rotated - std.mean, segment_bits=8)
a, b = signs.segments[0], signs.segments[1]
print("hamming(sketch 0, sketch 1):", hamming_distance(a, b, d))
print("hamming(sketch 0, itself):  ", hamming_distance(a, a, d))

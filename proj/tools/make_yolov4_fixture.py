#!/usr/bin/env python3
"""Writes the YOLOv4 (CSPDarknet53 + SPP + PANet, 80 classes) layer topology
in the bpmodel text format. Only the layer list is emitted; weights are
generated from a seed when needed."""

import argparse
import sys


class Builder:
    def __init__(self, c, h, w):
        self.lines = []
        self.shape = {"input": (c, h, w)}
        self.structures = []
        self.input = (c, h, w)

    def conv(self, name, src, filters, k, stride=1, affine="bn"):
        c, h, w = self.shape[src]
        pad = k // 2
        oh = (h + 2 * pad - k) // stride + 1
        ow = (w + 2 * pad - k) // stride + 1
        extra = f" stride={stride}" if stride != 1 else ""
        extra += f" pad={pad}" if pad else ""
        self.lines.append(
            f"layer {name} conv filters={filters} channels={c} kernel={k}x{k}{extra} affine={affine} inputs={src}")
        self.shape[name] = (filters, oh, ow)
        return name

    def add(self, name, *srcs, scalar=None):
        extra = f" scalar={scalar}" if scalar is not None else ""
        self.lines.append(f"layer {name} pointwise-add{extra} inputs={','.join(srcs)}")
        self.shape[name] = self.shape[srcs[0]]
        return name

    def mul(self, name, src, scalar):
        self.lines.append(f"layer {name} pointwise-mul scalar={scalar} inputs={src}")
        self.shape[name] = self.shape[src]
        return name

    def concat(self, name, *srcs):
        self.lines.append(f"layer {name} concat inputs={','.join(srcs)}")
        c = sum(self.shape[s][0] for s in srcs)
        _, h, w = self.shape[srcs[0]]
        self.shape[name] = (c, h, w)
        return name

    def maxpool(self, name, src, size):
        self.lines.append(f"layer {name} maxpool size={size} pad={size // 2} inputs={src}")
        self.shape[name] = self.shape[src]
        return name

    def upsample(self, name, src):
        self.lines.append(f"layer {name} upsample factor=2 inputs={src}")
        c, h, w = self.shape[src]
        self.shape[name] = (c, 2 * h, 2 * w)
        return name

    def reshape(self, name, src):
        self.lines.append(f"layer {name} transpose-reshape inputs={src}")
        c, h, w = self.shape[src]
        self.shape[name] = (h, w, c)
        return name

    def nbytes(self, name):
        c, h, w = self.shape[name]
        return 4 * c * h * w

    def structure(self, name, kind, src, branches):
        spec = "|".join(",".join(b) for b in branches)
        self.structures.append(f"structure {name} {kind} bytes={self.nbytes(src)} branches={spec}")


def csp_stage(b, tag, src, filters, blocks, first):
    down = b.conv(f"{tag}_down", src, filters, 3, 2)
    half = filters if first else filters // 2
    part_a = b.conv(f"{tag}_part_a", down, half, 1)
    x = b.conv(f"{tag}_part_b", down, half, 1)
    branch = [x]
    for i in range(blocks):
        r = b.conv(f"{tag}_res{i}_reduce", x, filters // 2 if first else half, 1)
        r = b.conv(f"{tag}_res{i}_conv", r, half, 3)
        x = b.add(f"{tag}_res{i}_add", x, r)
        branch += [f"{tag}_res{i}_reduce", f"{tag}_res{i}_conv", x]
    post = b.conv(f"{tag}_post", x, half, 1)
    branch.append(post)
    b.structure(f"{tag}_csp", "conv-branches", down, [branch, [part_a]])
    cat = b.concat(f"{tag}_concat", post, part_a)
    return b.conv(f"{tag}_transition", cat, filters, 1)


def head(b, tag, src, filters):
    x = b.conv(f"{tag}_conv", src, filters, 3)
    out = b.conv(f"{tag}_out", x, 255, 1, affine="bias")
    r = b.reshape(f"{tag}_reshape", out)
    m = b.mul(f"{tag}_scale", r, 2.0)
    a = b.add(f"{tag}_offset", m, scalar=-0.5)
    return out, [r, m, a]


def five_conv(b, tag, src, filters):
    x = src
    for i, (f, k) in enumerate([(filters, 1), (2 * filters, 3), (filters, 1), (2 * filters, 3), (filters, 1)]):
        x = b.conv(f"{tag}_c{i}", x, f, k)
    return x


def build(size):
    b = Builder(3, size, size)
    x = b.conv("stem", "input", 32, 3)
    x = csp_stage(b, "s1", x, 64, 1, True)
    x = csp_stage(b, "s2", x, 128, 2, False)
    route_52 = x = csp_stage(b, "s3", x, 256, 8, False)
    route_26 = x = csp_stage(b, "s4", x, 512, 8, False)
    x = csp_stage(b, "s5", x, 1024, 4, False)

    x = b.conv("spp_pre0", x, 512, 1)
    x = b.conv("spp_pre1", x, 1024, 3)
    x = b.conv("spp_pre2", x, 512, 1)
    p5 = b.maxpool("spp_pool5", x, 5)
    p9 = b.maxpool("spp_pool9", x, 9)
    p13 = b.maxpool("spp_pool13", x, 13)
    b.structure("spp", "nonconv-branches", x, [[p5], [p9], [p13]])
    x = b.concat("spp_concat", p13, p9, p5, x)
    x = b.conv("spp_post0", x, 512, 1)
    x = b.conv("spp_post1", x, 1024, 3)
    n19 = x = b.conv("spp_post2", x, 512, 1)

    y = b.conv("up1_reduce", x, 256, 1)
    y = b.upsample("up1_upsample", y)
    z = b.conv("up1_lateral", route_26, 256, 1)
    x = b.concat("up1_concat", z, y)
    n26 = x = five_conv(b, "up1", x, 256)

    y = b.conv("up2_reduce", x, 128, 1)
    y = b.upsample("up2_upsample", y)
    z = b.conv("up2_lateral", route_52, 128, 1)
    x = b.concat("up2_concat", z, y)
    n52 = x = five_conv(b, "up2", x, 128)

    out_small, br_small = head(b, "head_s", n52, 256)
    x = b.conv("down1_conv", n52, 256, 3, 2)
    x = b.concat("down1_concat", x, n26)
    x = five_conv(b, "down1", x, 256)
    out_mid, br_mid = head(b, "head_m", x, 512)
    x = b.conv("down2_conv", x, 512, 3, 2)
    x = b.concat("down2_concat", x, n19)
    x = five_conv(b, "down2", x, 512)
    out_large, br_large = head(b, "head_l", x, 1024)
    b.structure("yolo_heads", "nonconv-branches", out_small, [br_small, br_mid, br_large])

    c, h, w = b.input
    lines = ["# YOLOv4 topology (CSPDarknet53 backbone, SPP, PANet neck, 3 heads, 80 classes).",
             "# Generated by tools/make_yolov4_fixture.py; weights are seeded, not stored.",
             "bpmodel 1", f"input {c} {h} {w}"]
    return "\n".join(lines + b.lines + b.structures) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=320)
    ap.add_argument("-o", "--output", default="-")
    args = ap.parse_args()
    text = build(args.size)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w") as f:
            f.write(text)


if __name__ == "__main__":
    main()

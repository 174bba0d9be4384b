#!/usr/bin/env python3
"""Regenerate the tiny analytic ONNX models used by the unit tests.

toy_quadrant.onnx   input (1,3,8,8) -> features (1,12): per-quadrant channel
                    means ordered [TL rgb, TR rgb, BL rgb, BR rgb].
toy_detector.onnx   pixel_values (1,3,32,32), query_embeds (1,1,4)
                    -> logits (1,16,1), pred_boxes (1,16,4).
                    Patch p of the 4x4 grid (8x8 pixels each) has embedding
                    [mean r, mean g, mean b, 1]; its logit is the dot product
                    with the query; its box is the patch cell (cx, cy, w, h),
                    normalized to the input.
"""

import pathlib

import numpy as np
import onnx
import torch

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data" / "models"


class Quadrant(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.pool = torch.nn.AvgPool2d(4, stride=4)

    def forward(self, x):
        return self.pool(x).permute(0, 2, 3, 1).reshape(1, 12)


class PatchColor(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.embed = torch.nn.Conv2d(3, 4, 8, stride=8)
        w = torch.zeros(4, 3, 8, 8)
        for c in range(3):
            w[c, c] = 1.0 / 64.0
        b = torch.tensor([0.0, 0.0, 0.0, 1.0])
        self.embed.weight.data.copy_(w)
        self.embed.bias.data.copy_(b)
        cells = []
        for gy in range(4):
            for gx in range(4):
                cells.append([(gx + 0.5) / 4, (gy + 0.5) / 4, 0.25, 0.25])
        self.register_buffer("cells", torch.tensor([cells], dtype=torch.float32))
        self.register_buffer("ones", torch.ones(1, 4))

    # Fixed reshape sizes and no broadcasting Add against the logits: the
    # OpenCV 4.5 importer cannot evaluate Shape/Slice chains on this graph.
    def forward(self, pixel_values, query_embeds):
        e = self.embed(pixel_values).reshape(1, 4, 16).transpose(1, 2)  # 1,16,4
        logits = torch.matmul(e, query_embeds.transpose(1, 2))  # 1,16,1
        boxes = torch.matmul(logits * 0.0, self.ones) + self.cells
        return logits, boxes


def strip_identity(path):
    g = onnx.load(path)
    inits = {i.name: i for i in g.graph.initializer}
    keep = []
    for n in g.graph.node:
        if n.op_type == "Identity" and n.input[0] in inits:
            t = onnx.TensorProto()
            t.CopyFrom(inits[n.input[0]])
            t.name = n.output[0]
            g.graph.initializer.append(t)
        else:
            keep.append(n)
    del g.graph.node[:]
    g.graph.node.extend(keep)
    onnx.save(g, path)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    q = Quadrant().eval()
    p = OUT / "toy_quadrant.onnx"
    torch.onnx.export(q, torch.zeros(1, 3, 8, 8), str(p), dynamo=False, opset_version=11,
                      input_names=["input"], output_names=["features"])
    strip_identity(str(p))

    d = PatchColor().eval()
    p = OUT / "toy_detector.onnx"
    torch.onnx.export(d, (torch.zeros(1, 3, 32, 32), torch.zeros(1, 1, 4)), str(p), dynamo=False,
                      opset_version=11, input_names=["pixel_values", "query_embeds"],
                      output_names=["logits", "pred_boxes"])
    strip_identity(str(p))

    # sanity check against numpy
    x = np.random.default_rng(0).random((1, 3, 8, 8)).astype(np.float32)
    got = q(torch.from_numpy(x)).numpy()[0]
    want = np.array([x[0, c, ys, xs].mean() for ys, xs in
                     [(slice(0, 4), slice(0, 4)), (slice(0, 4), slice(4, 8)),
                      (slice(4, 8), slice(0, 4)), (slice(4, 8), slice(4, 8))] for c in range(3)])
    assert np.allclose(got, want, atol=1e-6)
    print("wrote", OUT)


if __name__ == "__main__":
    main()

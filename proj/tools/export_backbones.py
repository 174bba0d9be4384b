#!/usr/bin/env python3
"""Export feature-extraction backbones to ONNX plus a picsift model manifest.

Each graph ends at the feature layer: global-average-pooled final conv
activation for ResNet50 / MobileNetV2 / InceptionV3, fc7 for VGG16.

Pretrained ImageNet weights are used when torchvision can load them
(--pretrained, needs them cached or downloadable). Otherwise the
architectures are exported with seeded random initialization; file size and
latency are unchanged, retrieval quality is not representative.
"""

import argparse
import pathlib
import sys

import torch
import torchvision

ROSTER = ["mobilenetv2", "resnet50", "inceptionv3", "vgg16"]
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def build(name, pretrained):
    tv = torchvision.models
    if name == "mobilenetv2":
        m = tv.mobilenet_v2(weights="IMAGENET1K_V1" if pretrained else None)
        m.classifier = torch.nn.Identity()
        return m, 1280
    if name == "resnet50":
        m = tv.resnet50(weights="IMAGENET1K_V1" if pretrained else None)
        m.fc = torch.nn.Identity()
        return m, 2048
    if name == "inceptionv3":
        m = tv.inception_v3(weights="IMAGENET1K_V1" if pretrained else None,
                            aux_logits=True if pretrained else False, init_weights=not pretrained)
        m.aux_logits = False
        m.AuxLogits = None
        m.fc = torch.nn.Identity()
        return m, 2048
    if name == "vgg16":
        m = tv.vgg16(weights="IMAGENET1K_V1" if pretrained else None)
        m.classifier = m.classifier[:-1]
        return m, 4096
    raise SystemExit(f"unknown backbone {name}")


def strip_identity(path):
    import onnx
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


def manifest(name, dim):
    fmt = lambda v: ",".join(f"{x:g}" for x in v)
    return "\n".join([
        f"model_id = {name}",
        "role = extractor",
        "backend = onnx",
        f"file = {name}.onnx",
        f"feature_dim = {dim}",
        "preprocess.width = 224",
        "preprocess.height = 224",
        "preprocess.scale = 0.00392156862745098",
        f"preprocess.mean = {fmt(IMAGENET_MEAN)}",
        f"preprocess.std = {fmt(IMAGENET_STD)}",
        "preprocess.order = RGB",
        "preprocess.resize = center-crop",
        "",
    ])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="models")
    ap.add_argument("--models", default=",".join(ROSTER))
    ap.add_argument("--pretrained", action="store_true")
    ap.add_argument("--skip-existing", action="store_true")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(0)
    for name in args.models.split(","):
        onnx_path = out / f"{name}.onnx"
        man_path = out / f"{name}.model"
        if args.skip_existing and onnx_path.exists() and man_path.exists():
            print(f"{name}: exists, skipped")
            continue
        model, dim = build(name, args.pretrained)
        model.eval()
        tmp = onnx_path.with_suffix(".onnx.tmp")
        with torch.no_grad():
            torch.onnx.export(model, torch.zeros(1, 3, 224, 224), str(tmp), dynamo=False, opset_version=11,
                              input_names=["input"], output_names=["features"], do_constant_folding=True)
        strip_identity(str(tmp))
        tmp.replace(onnx_path)
        man_path.write_text(manifest(name, dim))
        print(f"{name}: {onnx_path.stat().st_size / 2**20:.1f} MB, dim {dim}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Regenerate the bundled desk-scale dataset under data/desk/.

Sources are the permissively licensed sample images that ship with
scikit-image, scikit-learn and matplotlib, plus procedurally drawn scenes
for categories those samples do not cover (roads, plates, statues,
balloons). Output is deterministic for a given set of installed packages.

Writes:
  images/<category>/<name>.{jpg,png}
  labels.tsv      relative_path <TAB> label,label
  prompts.tsv     prompt <TAB> category,category
  detections.tsv  relative_path <TAB> prompt <TAB> x_min,y_min,x_max,y_max,score
"""

import argparse
import math
import os
import pathlib

import numpy as np
from PIL import Image, ImageDraw, ImageFilter
from skimage import data as skdata

MAX_SIDE = 256
SKLEARN_IMAGES = pathlib.Path(__import__("sklearn").__file__).parent / "datasets" / "images"
MPL_SAMPLES = pathlib.Path(__import__("matplotlib").__file__).parent / "mpl-data" / "sample_data"


def fit(im):
    im = im.convert("RGB") if im.mode not in ("RGB", "L") else im
    w, h = im.size
    s = MAX_SIDE / max(w, h)
    if s < 1:
        im = im.resize((max(1, round(w * s)), max(1, round(h * s))), Image.LANCZOS)
    return im


def crop_frac(im, box):
    w, h = im.size
    return im.crop((round(box[0] * w), round(box[1] * h), round(box[2] * w), round(box[3] * h)))


def noise(rng, h, w, amp):
    return rng.normal(0.0, amp, size=(h, w, 1))


def textured(rng, h, w, base, amp):
    arr = np.ones((h, w, 3)) * np.array(base, dtype=float) + noise(rng, h, w, amp)
    return Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))


def sky(rng, w, h, top, bottom):
    t = np.linspace(0, 1, h)[:, None, None]
    arr = (1 - t) * np.array(top, float) + t * np.array(bottom, float)
    arr = np.broadcast_to(arr, (h, w, 3)) + noise(rng, h, w, 2.0)
    return Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))


def draw_road(rng, variant):
    w, h = 320, 240
    horizon = int(h * rng.uniform(0.35, 0.5))
    dusk = variant % 3 == 2
    img = sky(rng, w, h, (40, 60, 120) if dusk else (110, 160, 225), (230, 150, 90) if dusk else (200, 220, 240))
    ground = textured(rng, h - horizon, w, (70, 110, 50) if variant % 2 == 0 else (150, 140, 110), 12)
    img.paste(ground, (0, horizon))
    d = ImageDraw.Draw(img)
    vx = w * rng.uniform(0.4, 0.6)
    half_far = rng.uniform(6, 14)
    left, right = rng.uniform(-40, 20), w - rng.uniform(-40, 20)
    road = [(vx - half_far, horizon), (vx + half_far, horizon), (right, h), (left, h)]
    d.polygon(road, fill=(75, 75, 80) if not dusk else (55, 55, 62))
    for i in range(8):
        t0, t1 = (i + 0.2) / 8, (i + 0.6) / 8
        y0, y1 = horizon + (h - horizon) * t0 ** 1.5, horizon + (h - horizon) * t1 ** 1.5
        x0 = vx + ((left + right) / 2 - vx) * t0 ** 1.5
        x1 = vx + ((left + right) / 2 - vx) * t1 ** 1.5
        d.line([(x0, y0), (x1, y1)], fill=(235, 210, 60), width=max(1, int(1 + 4 * t1)))
    for _ in range(variant % 4):
        t = rng.uniform(0.3, 0.8)
        cy = horizon + (h - horizon) * t
        cw = 20 + 70 * t
        cx = vx + ((left + right) / 2 - vx) * t + rng.uniform(-0.4, 0.4) * cw * 2
        color = tuple(int(c) for c in rng.integers(30, 220, size=3))
        d.rounded_rectangle([cx - cw / 2, cy - cw * 0.45, cx + cw / 2, cy], radius=int(cw * 0.15), fill=color)
        d.rectangle([cx - cw * 0.35, cy - cw * 0.4, cx + cw * 0.35, cy - cw * 0.25], fill=(160, 200, 220))
    img = img.filter(ImageFilter.GaussianBlur(0.6))
    xs = [p[0] for p in road]
    box = (max(0, min(xs)), horizon, min(w, max(xs)), h)
    return img, box


def draw_plate(rng, variant):
    w, h = 300, 240
    img = textured(rng, h, w, (120, 80, 45) if variant % 2 else (190, 170, 140), 18)
    d = ImageDraw.Draw(img)
    cx, cy = w * rng.uniform(0.42, 0.58), h * rng.uniform(0.45, 0.55)
    rx, ry = w * rng.uniform(0.3, 0.38), h * rng.uniform(0.32, 0.4)
    d.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=(245, 245, 240), outline=(200, 200, 200), width=3)
    d.ellipse([cx - rx * 0.72, cy - ry * 0.72, cx + rx * 0.72, cy + ry * 0.72], fill=(235, 235, 230))
    palettes = [
        [(60, 140, 40), (90, 170, 60), (200, 40, 40), (240, 200, 60)],
        [(220, 180, 90), (200, 150, 60), (170, 40, 30)],
        [(120, 70, 30), (90, 50, 20), (60, 150, 50), (230, 230, 200)],
        [(240, 140, 40), (250, 200, 90), (110, 170, 60)],
    ]
    pal = palettes[variant % len(palettes)]
    for _ in range(int(rng.integers(25, 45))):
        a, r = rng.uniform(0, 2 * math.pi), rng.uniform(0, 0.6)
        px, py = cx + math.cos(a) * rx * r, cy + math.sin(a) * ry * r
        s = rng.uniform(5, 16)
        c = pal[int(rng.integers(0, len(pal)))]
        d.ellipse([px - s, py - s * 0.7, px + s, py + s * 0.7], fill=c)
    img = img.filter(ImageFilter.GaussianBlur(0.8))
    return img, (cx - rx, cy - ry, cx + rx, cy + ry)


def draw_statue(rng, variant):
    w, h = 240, 320
    img = sky(rng, w, h, (120, 170, 220), (215, 225, 235)) if variant % 2 == 0 else textured(rng, h, w, (175, 165, 150), 10)
    d = ImageDraw.Draw(img)
    tone = (150, 150, 145) if variant % 3 != 1 else (110, 85, 50)
    dark = tuple(max(0, c - 35) for c in tone)
    cx = w * rng.uniform(0.42, 0.58)
    base_y = h * 0.78
    d.rectangle([cx - 55, base_y, cx + 55, h], fill=dark)
    d.rectangle([cx - 48, base_y - 8, cx + 48, base_y], fill=tone)
    body_top = h * rng.uniform(0.2, 0.28)
    head_r = 20
    d.ellipse([cx - head_r, body_top - 2 * head_r, cx + head_r, body_top], fill=tone)
    d.polygon([(cx - 32, body_top + 4), (cx + 32, body_top + 4), (cx + 26, base_y - 70), (cx - 26, base_y - 70)], fill=tone)
    d.rectangle([cx - 24, base_y - 72, cx - 4, base_y - 8], fill=dark)
    d.rectangle([cx + 4, base_y - 72, cx + 24, base_y - 8], fill=tone)
    raise_arm = variant % 2 == 1
    if raise_arm:
        d.line([(cx + 30, body_top + 10), (cx + 55, body_top - 45)], fill=tone, width=12)
    else:
        d.line([(cx + 30, body_top + 10), (cx + 42, body_top + 80)], fill=tone, width=12)
    d.line([(cx - 30, body_top + 10), (cx - 44, body_top + 78)], fill=dark, width=12)
    arr = np.asarray(img).astype(float) + noise(rng, h, w, 6)
    img = Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8)).filter(ImageFilter.GaussianBlur(0.7))
    top = body_top - 2 * head_r - (50 if raise_arm else 0)
    return img, (cx - 60, max(0, top), cx + 60, h)


def draw_balloons(rng, variant):
    w, h = 300, 300
    img = sky(rng, w, h, (70, 130, 210), (190, 215, 240))
    d = ImageDraw.Draw(img)
    n = int(rng.integers(3, 8))
    anchor = (w * rng.uniform(0.35, 0.65), h * 0.95)
    xs, ys = [], []
    for _ in range(n):
        bx, by = w * rng.uniform(0.18, 0.82), h * rng.uniform(0.12, 0.55)
        rx, ry = rng.uniform(16, 30), rng.uniform(22, 38)
        c = tuple(int(v) for v in rng.choice([[220, 30, 40], [250, 200, 30], [40, 160, 220], [240, 90, 170], [90, 200, 90], [250, 130, 30]]))
        d.line([(bx, by + ry), anchor], fill=(90, 90, 90), width=1)
        d.ellipse([bx - rx, by - ry, bx + rx, by + ry], fill=c)
        d.ellipse([bx - rx * 0.5, by - ry * 0.6, bx - rx * 0.15, by - ry * 0.2], fill=tuple(min(255, v + 60) for v in c))
        xs += [bx - rx, bx + rx]
        ys += [by - ry, by + ry]
    img = img.filter(ImageFilter.GaussianBlur(0.5))
    return img, (min(xs), min(ys), max(xs), max(ys))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "desk"))
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    rng = np.random.default_rng(20230401)

    chelsea = Image.fromarray(skdata.chelsea())
    horse_mask = ~skdata.horse()
    astronaut = Image.fromarray(skdata.astronaut())
    camera = Image.fromarray(skdata.camera())
    coffee = Image.fromarray(skdata.coffee())
    rocket = Image.fromarray(skdata.rocket())
    china = Image.open(SKLEARN_IMAGES / "china.jpg").convert("RGB")
    flower = Image.open(SKLEARN_IMAGES / "flower.jpg").convert("RGB")
    hopper = Image.open(MPL_SAMPLES / "grace_hopper.jpg").convert("RGB")

    def horse(fg, bg_top, bg_bottom):
        hh, ww = horse_mask.shape
        bg = np.asarray(sky(rng, ww, hh, bg_top, bg_bottom)).astype(float)
        fg_arr = np.ones_like(bg) * np.array(fg, float) + noise(rng, hh, ww, 8)
        arr = np.where(horse_mask[..., None], fg_arr, bg)
        return Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))

    # (relative path, image, labels, {prompt: (normalized box, score)})
    items = []

    def add(rel, im, labels, dets):
        items.append((rel, im, labels, dets))

    full = (0.02, 0.02, 0.98, 0.98)
    add("animals/cat_chelsea.jpg", chelsea, ["cat", "animal"], {"cat": ((0.02, 0.0, 0.98, 1.0), 0.62), "animal": ((0.02, 0.0, 0.98, 1.0), 0.41)})
    add("animals/cat_face.jpg", crop_frac(chelsea, (0.25, 0.1, 0.85, 0.95)), ["cat", "animal"], {"cat": ((0.05, 0.05, 0.95, 0.95), 0.55), "animal": (full, 0.33)})
    add("animals/cat_mirror.png", chelsea.transpose(Image.FLIP_LEFT_RIGHT).point(lambda v: int(v * 0.85)), ["cat", "animal"], {"cat": ((0.02, 0.0, 0.98, 1.0), 0.48), "animal": (full, 0.29)})
    warm = np.asarray(crop_frac(chelsea, (0.1, 0.0, 0.7, 0.8))).astype(float) * np.array([1.1, 0.95, 0.8])
    add("animals/cat_warm.jpg", Image.fromarray(np.clip(warm, 0, 255).astype(np.uint8)), ["cat", "animal"], {"cat": ((0.1, 0.05, 0.95, 1.0), 0.37), "animal": (full, 0.24)})
    add("animals/horse_silhouette.png", horse((250, 250, 250), (10, 10, 10), (10, 10, 10)), ["horse", "animal"], {"animal": ((0.05, 0.02, 0.97, 0.95), 0.36), "cat": ((0.05, 0.02, 0.97, 0.95), 0.07)})
    add("animals/horse_field.jpg", horse((120, 70, 35), (120, 170, 220), (80, 140, 60)), ["horse", "animal"], {"animal": ((0.05, 0.02, 0.97, 0.95), 0.44)})
    add("animals/horse_dusk.jpg", horse((40, 30, 30), (240, 140, 60), (120, 50, 60)), ["horse", "animal"], {"animal": ((0.05, 0.02, 0.97, 0.95), 0.27), "statue": ((0.05, 0.02, 0.97, 0.95), 0.08)})

    add("people/astronaut.jpg", astronaut, ["person", "woman"], {"person": ((0.05, 0.0, 0.75, 1.0), 0.58)})
    add("people/astronaut_portrait.jpg", crop_frac(astronaut, (0.15, 0.0, 0.65, 0.55)), ["person", "woman"], {"person": ((0.1, 0.05, 0.9, 1.0), 0.51)})
    add("people/grace_hopper.jpg", hopper, ["person", "woman"], {"person": ((0.1, 0.08, 0.95, 1.0), 0.6)})
    add("people/grace_hopper_gray.jpg", hopper.convert("L"), ["person", "woman"], {"person": ((0.1, 0.08, 0.95, 1.0), 0.44)})
    add("people/grace_portrait.jpg", crop_frac(hopper, (0.2, 0.1, 0.85, 0.6)), ["person", "woman"], {"person": ((0.05, 0.0, 0.95, 1.0), 0.39)})
    add("people/cameraman.png", camera, ["person", "man"], {"person": ((0.0, 0.05, 0.65, 1.0), 0.53)})
    add("people/cameraman_crop.jpg", crop_frac(camera, (0.0, 0.0, 0.7, 0.75)), ["person", "man"], {"person": ((0.0, 0.08, 0.9, 1.0), 0.42)})

    road_scores = [0.52, 0.47, 0.31, 0.44, 0.22, 0.38, 0.27]
    for i, s in enumerate(road_scores):
        im, box = draw_road(rng, i)
        wd, ht = im.size
        add(f"streets/road_{i + 1:02d}.jpg", im, ["road", "street"] + (["car"] if i % 4 else []),
            {"road": ((box[0] / wd, box[1] / ht, box[2] / wd, box[3] / ht), s)})

    add("food/coffee.jpg", coffee, ["food", "drink"], {"food": ((0.05, 0.0, 0.8, 1.0), 0.3)})
    add("food/coffee_cup.jpg", crop_frac(coffee, (0.05, 0.0, 0.7, 0.75)), ["food", "drink"], {"food": ((0.1, 0.05, 0.95, 1.0), 0.26)})
    plate_scores = [0.55, 0.49, 0.41, 0.35, 0.18]
    for i, s in enumerate(plate_scores):
        im, box = draw_plate(rng, i)
        wd, ht = im.size
        add(f"food/plate_{i + 1:02d}.jpg", im, ["food"], {"food": ((box[0] / wd, box[1] / ht, box[2] / wd, box[3] / ht), s)})

    statue_scores = [0.5, 0.43, 0.34, 0.29, 0.24, 0.16]
    for i, s in enumerate(statue_scores):
        im, box = draw_statue(rng, i)
        wd, ht = im.size
        nb = (box[0] / wd, box[1] / ht, box[2] / wd, box[3] / ht)
        add(f"statues/statue_{i + 1:02d}.jpg", im, ["statue"], {"statue": (nb, s), "person": (nb, 0.12 if i % 2 else 0.09)})

    add("general/pagoda.jpg", china, ["monument", "building"], {"statue": ((0.1, 0.1, 0.55, 0.95), 0.06)})
    add("general/dahlia.jpg", flower, ["flower"], {"food": ((0.25, 0.15, 0.75, 0.85), 0.08)})
    add("general/rocket.jpg", rocket, ["rocket", "launchpad"], {"statue": ((0.45, 0.1, 0.6, 0.95), 0.11)})
    for i, s in enumerate([0.57, 0.46, 0.33]):
        im, box = draw_balloons(rng, i)
        wd, ht = im.size
        add(f"general/balloons_{i + 1:02d}.jpg", im, ["balloon", "sky"], {"balloons": ((box[0] / wd, box[1] / ht, box[2] / wd, box[3] / ht), s)})

    img_dir = out / "images"
    lines_labels, lines_dets = [], []
    for rel, im, labels, dets in items:
        im = fit(im)
        dst = img_dir / rel
        dst.parent.mkdir(parents=True, exist_ok=True)
        if rel.endswith(".png"):
            im.save(dst, optimize=True)
        else:
            im.save(dst, quality=88)
        w, h = im.size
        lines_labels.append(f"{rel}\t{','.join(labels)}")
        for prompt, (nb, score) in sorted(dets.items()):
            x0, y0 = max(0, math.floor(nb[0] * w)), max(0, math.floor(nb[1] * h))
            x1, y1 = min(w, math.ceil(nb[2] * w)), min(h, math.ceil(nb[3] * h))
            lines_dets.append(f"{rel}\t{prompt}\t{x0},{y0},{x1},{y1},{score:.2f}")

    (out / "labels.tsv").write_text("# relative_path\tlabels\n" + "\n".join(lines_labels) + "\n")
    (out / "detections.tsv").write_text("# relative_path\tprompt\tx_min,y_min,x_max,y_max,score\n" + "\n".join(lines_dets) + "\n")
    prompts = [("cat", "cat"), ("animal", "animal"), ("person", "person"), ("road", "road"),
               ("food", "food"), ("statue", "statue"), ("balloons", "balloon")]
    (out / "prompts.tsv").write_text("# prompt\tcategories\n" + "\n".join(f"{p}\t{c}" for p, c in prompts) + "\n")
    print(f"wrote {len(items)} images to {img_dir}")


if __name__ == "__main__":
    main()

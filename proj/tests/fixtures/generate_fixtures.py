#!/usr/bin/env python3
"""Regenerates the synthetic fixture corpus under tests/fixtures/.

Scenes are procedural "rooms": a wall gradient, a textured floor and a set of
furniture-like shapes drawn from a per-category palette. Two photos of the
same room are two crops of one rendered scene, which is what the triplet
sampler relies on. Everything is seeded, so re-running reproduces the files
byte for byte with the same Pillow version.

Usage: python3 generate_fixtures.py  (writes next to this script)
"""

import csv
import hashlib
import json
import os
import random

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

HERE = os.path.dirname(os.path.abspath(__file__))
SCENE_W, SCENE_H = 480, 360
VIEW_W, VIEW_H = 320, 240

PALETTES = {
    "kitchen": {"wall": [(235, 232, 225), (200, 205, 210)], "floor": (150, 110, 70),
                "objects": [(250, 250, 250), (90, 90, 95), (170, 130, 90), (40, 60, 90), (200, 200, 190)]},
    "bathroom": {"wall": [(200, 225, 240), (150, 190, 215)], "floor": (225, 225, 230),
                 "objects": [(255, 255, 255), (60, 110, 160), (180, 200, 210), (30, 30, 40)]},
    "bedroom": {"wall": [(230, 200, 190), (190, 150, 140)], "floor": (120, 80, 50),
                "objects": [(120, 40, 60), (240, 230, 210), (80, 50, 40), (200, 120, 90)]},
    "living room": {"wall": [(225, 215, 190), (180, 165, 140)], "floor": (110, 85, 60),
                    "objects": [(70, 90, 60), (160, 60, 40), (230, 220, 200), (50, 50, 55), (190, 160, 110)]},
    "outdoor": {"wall": [(140, 190, 240), (200, 225, 250)], "floor": (70, 130, 60),
                "objects": [(160, 70, 50), (240, 240, 235), (90, 90, 100), (40, 80, 40), (200, 180, 150)]},
    "dining room": {"wall": [(215, 210, 230), (170, 160, 190)], "floor": (130, 95, 65),
                    "objects": [(100, 60, 40), (230, 230, 220), (150, 40, 50), (60, 60, 70)]},
}


def jitter(color, rng, amount=25):
    return tuple(int(np.clip(c + rng.randint(-amount, amount), 0, 255)) for c in color)


def random_object(rng, palette):
    kind = rng.choice(["cabinet", "window", "frame", "blob", "shelf", "tiles"])
    w = rng.randint(40, 140)
    h = rng.randint(40, 130)
    x = rng.randint(0, SCENE_W - w)
    y = rng.randint(0, SCENE_H - h)
    return {"kind": kind, "box": (x, y, x + w, y + h), "color": jitter(rng.choice(palette["objects"]), rng),
            "accent": jitter(rng.choice(palette["objects"]), rng), "seed": rng.randint(0, 10**9)}


def draw_object(draw, obj):
    x0, y0, x1, y1 = obj["box"]
    rng = random.Random(obj["seed"])
    c, a = obj["color"], obj["accent"]
    k = obj["kind"]
    if k == "cabinet":
        draw.rectangle(obj["box"], fill=c, outline=a, width=3)
        doors = rng.randint(2, 4)
        dw = (x1 - x0) / doors
        for i in range(doors):
            dx0 = int(x0 + i * dw + 4)
            dx1 = int(x0 + (i + 1) * dw - 4)
            draw.rectangle((dx0, y0 + 5, dx1, y1 - 5), outline=a, width=2)
            kx = dx1 - 7 if i % 2 == 0 else dx0 + 7
            draw.ellipse((kx - 3, (y0 + y1) // 2 - 3, kx + 3, (y0 + y1) // 2 + 3), fill=a)
    elif k == "window":
        draw.rectangle(obj["box"], fill=(210, 230, 250), outline=c, width=5)
        mx, my = (x0 + x1) // 2, (y0 + y1) // 2
        draw.line((mx, y0, mx, y1), fill=c, width=4)
        draw.line((x0, my, x1, my), fill=c, width=4)
    elif k == "frame":
        draw.rectangle(obj["box"], fill=a, outline=c, width=6)
        for _ in range(rng.randint(2, 5)):
            px = rng.randint(x0 + 6, max(x0 + 7, x1 - 16))
            py = rng.randint(y0 + 6, max(y0 + 7, y1 - 16))
            r = rng.randint(4, 12)
            draw.ellipse((px, py, px + r, py + r), fill=jitter(c, rng, 60))
    elif k == "blob":
        draw.ellipse(obj["box"], fill=c, outline=a, width=2)
        cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
        draw.ellipse((cx - 6, cy - 6, cx + 6, cy + 6), fill=a)
    elif k == "shelf":
        draw.rectangle(obj["box"], fill=c)
        rows = rng.randint(2, 4)
        for r in range(1, rows):
            yy = int(y0 + r * (y1 - y0) / rows)
            draw.line((x0, yy, x1, yy), fill=a, width=3)
            bx = x0 + 3
            while bx < x1 - 8:
                bw = rng.randint(4, 10)
                bh = rng.randint(8, int((y1 - y0) / rows) - 2 if (y1 - y0) / rows > 12 else 10)
                draw.rectangle((bx, yy - bh, bx + bw, yy - 2), fill=jitter(a, rng, 80))
                bx += bw + rng.randint(1, 5)
    else:  # tiles
        step = rng.randint(10, 18)
        for ty in range(y0, y1, step):
            for tx in range(x0, x1, step):
                fill = c if ((tx - x0) // step + (ty - y0) // step) % 2 == 0 else a
                draw.rectangle((tx, ty, min(tx + step - 1, x1), min(ty + step - 1, y1)), fill=fill)


def scene_objects(seed, category, replace_fraction=0.0, replace_seed=0):
    rng = random.Random(seed)
    palette = PALETTES[category]
    objects = [random_object(rng, palette) for _ in range(rng.randint(9, 13))]
    if replace_fraction > 0:
        rrng = random.Random(replace_seed)
        order = list(range(len(objects)))
        rrng.shuffle(order)
        for idx in order[: int(round(replace_fraction * len(objects)))]:
            objects[idx] = random_object(rrng, palette)
    return objects


def render_scene(seed, category, replace_fraction=0.0, replace_seed=0, tint=0.0):
    rng = random.Random(seed * 7919 + 13)
    palette = PALETTES[category]
    top, bottom = palette["wall"]
    top, bottom = jitter(top, rng, 15), jitter(bottom, rng, 15)
    arr = np.zeros((SCENE_H, SCENE_W, 3), dtype=np.float64)
    horizon = int(SCENE_H * rng.uniform(0.62, 0.72))
    for y in range(horizon):
        t = y / max(1, horizon - 1)
        arr[y, :, :] = np.array(top) * (1 - t) + np.array(bottom) * t
    floor = np.array(jitter(palette["floor"], rng, 15), dtype=np.float64)
    arr[horizon:, :, :] = floor
    img = Image.fromarray(arr.astype(np.uint8))
    draw = ImageDraw.Draw(img)
    plank = rng.randint(14, 26)
    for yy in range(horizon, SCENE_H, plank):
        draw.line((0, yy, SCENE_W, yy), fill=tuple(int(v * 0.75) for v in floor), width=2)
        off = rng.randint(0, 60)
        for xx in range(off, SCENE_W, rng.randint(60, 110)):
            draw.line((xx, yy, xx, yy + plank), fill=tuple(int(v * 0.8) for v in floor), width=2)
    for obj in scene_objects(seed, category, replace_fraction, replace_seed):
        draw_object(draw, obj)
    img = img.filter(ImageFilter.GaussianBlur(0.6))
    arr = np.asarray(img).astype(np.float64)
    if tint:
        arr = arr * (1 - 0.25 * tint) + np.array([255, 180, 90]) * 0.25 * tint
    noise = np.random.default_rng(seed).normal(0, 2.0, arr.shape)
    return Image.fromarray(np.clip(arr + noise, 0, 255).astype(np.uint8))


def view(scene, dx, dy, zoom=1.0):
    w = int(VIEW_W * 1.25 / zoom)
    h = int(VIEW_H * 1.25 / zoom)
    cx = (SCENE_W - w) // 2 + dx
    cy = (SCENE_H - h) // 2 + dy
    cx = max(0, min(SCENE_W - w, cx))
    cy = max(0, min(SCENE_H - h, cy))
    return scene.crop((cx, cy, cx + w, cy + h)).resize((VIEW_W, VIEW_H), Image.BILINEAR)


def save_jpeg(img, path, quality=92):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    img.save(path, "JPEG", quality=quality)


def sha256_of(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


# --------------------------------------------------------------------------
# Catalog: 5 listings, 20 photos.
LISTINGS = [
    # listing_id, address, city, zip, price, beds, baths, sqft, lot, date, rooms
    ("L1001", "12 Harbor St", "Boston", "02118", 450000, 2, 1, 1100, 0, "2026-08-01",
     [("kitchen", 101, 2), ("bathroom", 102, 1), ("bedroom", 103, 1)]),
    ("L1002", "88 Elm Ave", "Cambridge", "02139", 650000, 3, 2, 1650, 2400, "2026-07-15",
     [("kitchen", 201, 1), ("living room", 202, 1), ("outdoor", 203, 1)]),
    ("L1003", "5 Prospect Hill Rd", "Somerville", "02143", 520000, 3, 1.5, 1400, 1800, "2026-09-02",
     [("kitchen", 301, 2), ("bedroom", 302, 1), ("bedroom", 303, 1)]),
    ("L1004", "301 Tremont St, Unit 4", "Boston", "02116", 380000, 1, 1, 750, 0, "2026-06-20",
     [("bathroom", 401, 2), ("living room", 402, 1), ("outdoor", 403, 1)]),
    ("L1005", "17 Walnut Park", "Newton", "02458", 900000, 4, 3, 2800, 9000, "2026-05-11",
     [("kitchen", 501, 1), ("living room", 502, 2), ("outdoor", 503, 1), ("dining room", 504, 1)]),
]

VIEW_OFFSETS = [(-30, -12, 1.0), (34, 14, 1.08), (6, -20, 0.95)]


def build_catalog():
    root = os.path.join(HERE, "catalog")
    images_dir = os.path.join(root, "images")
    manifest_rows = []
    labels = []
    for (lid, addr, city, zp, price, beds, baths, sqft, lot, date, rooms) in LISTINGS:
        paths = []
        k = 0
        for category, seed, nviews in rooms:
            scene = render_scene(seed, category)
            for v in range(nviews):
                k += 1
                dx, dy, zoom = VIEW_OFFSETS[v]
                rel = f"images/{lid}_{k}.jpg"
                save_jpeg(view(scene, dx, dy, zoom), os.path.join(root, rel))
                paths.append(rel)
                labels.append((f"{lid}-{k}", category, 0.9))
        manifest_rows.append([lid, addr, city, zp, price, beds, baths, sqft, lot, date, ";".join(paths)])

    with open(os.path.join(root, "manifest.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["listing_id", "street_address", "city", "zip", "price", "bedrooms", "bathrooms",
                    "square_feet", "lot_size", "listed_date", "photo_paths"])
        w.writerows(manifest_rows)

    # Upload query: a third view of the L1003 kitchen.
    query_path = os.path.join(HERE, "queries", "kitchen_query.jpg")
    dx, dy, zoom = VIEW_OFFSETS[2]
    save_jpeg(view(render_scene(301, "kitchen"), dx, dy, zoom), query_path)
    labels.append((sha256_of(query_path), "kitchen", 0.88))
    bath_query = os.path.join(HERE, "queries", "bathroom_query.jpg")
    save_jpeg(view(render_scene(102, "bathroom"), *VIEW_OFFSETS[2]), bath_query)
    labels.append((sha256_of(bath_query), "bathroom", 0.8))

    with open(os.path.join(root, "labels.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "category_name", "confidence"])
        w.writerows(labels)


# --------------------------------------------------------------------------
# Survey: five questions, anchor "X 0" and candidates "X 1".."X 5".
# Each candidate is the anchor scene with a fraction of its objects replaced;
# the fraction controls how similar the model finds it. Votes encode the
# human orderings described for each question.
SURVEY = [
    # qid, category, label, anchor seed, {candidate: replace fraction}, {candidate: votes}
    ("Q1", "bedroom", "Bedroom", 601, {1: 0.1, 2: 0.45, 3: 0.7, 4: 0.9, 5: 1.0}, {1: 12, 2: 6, 3: 4, 4: 2, 5: 1}),
    ("Q2", "bathroom", "Bathroom", 602, {1: 0.7, 2: 0.35, 3: 0.1, 4: 0.95, 5: 0.5}, {1: 2, 2: 8, 3: 11, 4: 1, 5: 7}),
    ("Q3", "kitchen", "Kitchen", 603, {1: 0.7, 2: 0.95, 3: 0.1, 4: 0.35, 5: 0.5}, {1: 3, 2: 1, 3: 6, 4: 8, 5: 10}),
    ("Q4", "living room", "Room", 604, {1: 0.35, 2: 0.75, 3: 0.5, 4: 0.1, 5: 1.0}, {1: 10, 2: 2, 3: 8, 4: 6, 5: 1}),
    ("Q5", "outdoor", "Outdoor", 605, {1: 0.1, 2: 0.5, 3: 0.75, 4: 0.35, 5: 1.0}, {1: 14, 2: 5, 3: 3, 4: 6, 5: 2}),
]


def build_survey():
    root = os.path.join(HERE, "survey")
    rows = []
    for qid, category, label, seed, fractions, votes in SURVEY:
        anchor_rel = f"images/{label.lower()}_0.jpg"
        save_jpeg(view(render_scene(seed, category), 0, 0, 1.0), os.path.join(root, anchor_rel))
        for cand in range(1, 6):
            frac = fractions[cand]
            if frac >= 1.0:
                img = render_scene(seed + 1000 + cand, category)
            else:
                img = render_scene(seed, category, replace_fraction=frac, replace_seed=seed * 10 + cand,
                                   tint=frac)
            dx = int(40 * frac) * (1 if cand % 2 else -1)
            dy = int(18 * frac)
            rel = f"images/{label.lower()}_{cand}.jpg"
            save_jpeg(view(img, dx, dy, 1.0), os.path.join(root, rel))
            rows.append([qid, category, anchor_rel, rel, votes[cand]])
    with open(os.path.join(root, "survey.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["question_id", "category", "anchor_path", "candidate_path", "votes"])
        w.writerows(rows)


# --------------------------------------------------------------------------
# Decoder reference set: ten files whose dimensions and channel means are
# recorded as decoded by Pillow.
def build_decode_set():
    root = os.path.join(HERE, "decode")
    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(42)
    specs = [
        ("rgb_640x480.jpg", (640, 480), "RGB", {"quality": 90}),
        ("rgb_333x111.jpg", (333, 111), "RGB", {"quality": 85}),
        ("rgb_64x48.jpg", (64, 48), "RGB", {"quality": 95}),
        ("rgb_17x9.jpg", (17, 9), "RGB", {"quality": 80}),
        ("gray_120x80.jpg", (120, 80), "L", {"quality": 90}),
        ("progressive_200x150.jpg", (200, 150), "RGB", {"quality": 88, "progressive": True}),
        ("subsample444_101x77.jpg", (101, 77), "RGB", {"quality": 92, "subsampling": 0}),
        ("scene_320x240.jpg", None, "RGB", {"quality": 92}),
        ("rgb_50x40.png", (50, 40), "RGB", {}),
        ("gray_30x20.png", (30, 20), "L", {}),
    ]
    reference = []
    for name, size, mode, kwargs in specs:
        if size is None:
            img = view(render_scene(777, "living room"), 0, 0)
        else:
            w, h = size
            base = rng.uniform(0, 255, (h // 4 + 1, w // 4 + 1, 3))
            big = np.kron(base, np.ones((4, 4, 1)))[:h, :w, :]
            img = Image.fromarray(big.astype(np.uint8)).filter(ImageFilter.GaussianBlur(1.0))
            if mode == "L":
                img = img.convert("L")
        path = os.path.join(root, name)
        if name.endswith(".png"):
            img.save(path, "PNG")
        else:
            img.save(path, "JPEG", **kwargs)
        decoded = Image.open(path)
        decoded.load()
        arr = np.asarray(decoded).astype(np.float64) / 255.0
        if arr.ndim == 2:
            arr = arr[:, :, None]
        reference.append({
            "file": name,
            "width": decoded.width,
            "height": decoded.height,
            "channels": int(arr.shape[2]),
            "channel_means": [float(arr[:, :, c].mean()) for c in range(arr.shape[2])],
        })
    with open(os.path.join(root, "reference.json"), "w") as f:
        json.dump(reference, f, indent=2)


if __name__ == "__main__":
    build_catalog()
    build_survey()
    build_decode_set()
    print("fixtures written to", HERE)

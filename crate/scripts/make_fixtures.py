"""Regenerates the image and video fixtures under fixtures/."""

import json
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path(__file__).resolve().parent.parent / "fixtures"


def scene():
    img = Image.new("RGB", (256, 256), (0, 0, 255))
    ImageDraw.Draw(img).rectangle([8, 8, 247, 247], fill=(255, 0, 0))
    img.save(ROOT / "scene.png")


def two_regions():
    img = Image.new("RGB", (128, 96), (255, 255, 0))
    ImageDraw.Draw(img).rectangle([0, 0, 63, 95], fill=(0, 128, 0))
    img.save(ROOT / "two_regions.png")


def dog():
    img = Image.new("RGB", (256, 192), (255, 255, 255))
    d = ImageDraw.Draw(img)
    d.rectangle([140, 90, 239, 110], fill=(139, 69, 19))
    d.rectangle([150, 111, 160, 170], fill=(139, 69, 19))
    d.rectangle([220, 111, 230, 170], fill=(139, 69, 19))
    d.rectangle([40, 120, 109, 160], fill=(0, 0, 0))
    d.rectangle([100, 100, 125, 125], fill=(0, 0, 0))
    img.save(ROOT / "dog.png")


def sign():
    img = Image.new("RGB", (160, 96), (128, 128, 128))
    d = ImageDraw.Draw(img)
    d.rectangle([16, 16, 143, 79], fill=(255, 0, 0))
    d.rectangle([32, 36, 127, 59], fill=(255, 255, 255))
    img.save(ROOT / "sign.png")
    boxes = [{"box": [16, 16, 144, 80], "text": "STOP"}]
    (ROOT / "sign.png.ocr.json").write_text(json.dumps(boxes, indent=2) + "\n")


def video():
    out = ROOT / "sunrise"
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(50):
        img = Image.new("RGB", (32, 32), (5 * i, 60 + 2 * i, 250 - 5 * i))
        name = f"frame_{i:03}.png"
        img.save(out / name)
        names.append(name)
    (out / "manifest.json").write_text(json.dumps({"fps": 5.0, "frames": names}, indent=2) + "\n")


if __name__ == "__main__":
    ROOT.mkdir(exist_ok=True)
    scene()
    two_regions()
    dog()
    sign()
    video()

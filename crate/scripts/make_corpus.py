"""Writes the routing corpus under corpus/. Run `harness replay --bless` on
each trace afterwards to record artifact hashes."""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "corpus"
FIX = "../fixtures"

IMAGES = {
    "scene": ("scene.png", (0.5, 0.5)),
    "two_regions": ("two_regions.png", (0.25, 0.5)),
    "dog": ("dog.png", (0.29, 0.73)),
    "sign": ("sign.png", (0.5, 0.3)),
}


def click(target, x, y, t=None):
    p = {"target_artifact": target, "samples": [{"x": x, "y": y, "t_ms": 0}]}
    if t is not None:
        p["timestamp_s"] = t
    return {"pointer": p}


def image_trace(family, image, utterance, tool, point=True):
    name, (x, y) = IMAGES[image]
    steps = [{"upload": f"{FIX}/{name}"}]
    if point:
        steps.append(click(name, x, y))
    steps.append({"utterance": utterance, "expected_tool": tool, "expected_status": "ok"})
    return family, steps


def video_trace(t, utterance):
    steps = [
        {"upload": f"{FIX}/sunrise"},
        click("sunrise", 0.5, 0.5, t),
        {"utterance": utterance, "expected_tool": "video_highlight", "expected_status": "ok"},
    ]
    return "highlight", steps


TRACES = {
    "remove_01": image_trace("remove", "scene", "remove the masked object", "remove_masked_object"),
    "remove_02": image_trace("remove", "dog", "remove the black dog near the table in the image", "remove_masked_object"),
    "remove_03": image_trace("remove", "two_regions", "remove the masked object", "remove_masked_object"),
    "remove_04": image_trace("remove", "scene", "remove the masked object and then caption this photo", "remove_masked_object"),
    "replace_01": image_trace("replace", "scene", "replace the masked object with a green apple", "replace_masked_object"),
    "replace_02": image_trace("replace", "dog", 'replace the masked object with "a sleeping cat"', "replace_masked_object"),
    "replace_03": image_trace("replace", "two_regions", "replace the masked object with a blue ball", "replace_masked_object"),
    "replace_04": image_trace("replace", "scene", "replace the masked object with a tree", "replace_masked_object"),
    "question_01": image_trace("question", "two_regions", "what is the background color in the masked region", "question_masked_object"),
    "question_02": image_trace("question", "scene", "what is the background color in the masked region", "question_masked_object"),
    "question_03": image_trace("question", "dog", "what is the background color in the masked region", "question_masked_object"),
    "question_04": image_trace("question", "sign", "what is in this masked figure", "question_masked_object"),
    "caption_01": image_trace("caption", "scene", "caption this photo", "caption", point=False),
    "caption_02": image_trace("caption", "two_regions", "caption this photo", "caption", point=False),
    "caption_03": image_trace("caption", "dog", "caption this photo", "caption", point=False),
    "caption_04": image_trace("caption", "sign", "caption this photo", "caption", point=False),
    "highlight_01": video_trace(5.0, "cut this video to a TikTok video"),
    "highlight_02": video_trace(0.0, "cut this video to a TikTok video about the sunrise"),
    "highlight_03": video_trace(8.0, "cut this video to a TikTok video"),
    "highlight_04": video_trace(3.0, 'cut this video to a TikTok video called "golden hour"'),
}

if __name__ == "__main__":
    ROOT.mkdir(exist_ok=True)
    for old in ROOT.glob("*.jsonl"):
        old.unlink()
    for name, (family, steps) in TRACES.items():
        lines = [json.dumps({"version": 1, "backend": "null", "family": family})]
        lines += [json.dumps(s) for s in steps]
        (ROOT / f"{name}.jsonl").write_text("\n".join(lines) + "\n")

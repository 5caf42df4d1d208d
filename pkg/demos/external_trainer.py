"""Driving the correction loop with a segmenter you run yourself.

ExternalSegmenter swaps the built-in logistic model for a file exchange, so
any training stack can sit on the other side. The handshake per round:

  1. this side writes  round_NNN/labels/train_*.gtf  then  round_NNN/LABELS_DONE
  2. your trainer fits on  images/train_*.gtf  with those labels
  3. it writes  round_NNN/logits/train_*.gtf  and  logits/val_*.gtf  (f32
     fields, positive = object)  then touches  round_NNN/DONE

Here a thread plays the trainer: it answers with the signed distance of the
labels it was handed, negated so positive means object. One round is enough
to see the files move.
"""

import tempfile
import threading
import time
from pathlib import Path

import numpy as np

from segnoise import ExternalSegmenter, centered_disk, dilate_one, signed_distance
from segnoise.formats import load_mask, save_field


def toy_trainer(root: Path):
    while True:
        rounds = sorted(root.glob("round_*"))
        if rounds and (rounds[-1] / "LABELS_DONE").exists():
            rdir = rounds[-1]
            break
        time.sleep(0.05)
    label_files = sorted((rdir / "labels").glob("train_*.gtf"))
    print(f"[trainer] round {rdir.name}: fitting on {len(label_files)} labels")
    (rdir / "logits").mkdir()
    for path in label_files:
        logits = -signed_distance(load_mask(path))
        save_field(logits, rdir / "logits" / path.name)
    for path in sorted((root / "images").glob("val_*.gtf")):
        save_field(np.zeros((24, 24)) - 1.0, rdir / "logits" / path.name)
    (rdir / "DONE").touch()
    print("[trainer] logits written, DONE touched")


masks = [centered_disk((24, 24), radius=r) for r in (5, 7)]
images = [m.astype(float) for m in masks]
val_images = [np.zeros((24, 24))]

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    seg = ExternalSegmenter(root, images, val_images, poll_interval=0.05, timeout=30.0)
    print("[loop] wrote", len(list((root / "images").glob("*.gtf"))),
          "images for the trainer")

    worker = threading.Thread(target=toy_trainer, args=(root,))
    worker.start()
    labels = [dilate_one(m) for m in masks]
    seg.fit(images, labels)
    worker.join()

    logits = seg.predict_logits(images[0])
    print("[loop] got logits back; object pixels predicted:",
          int((logits >= 0).sum()), "of", int(labels[0].sum()))

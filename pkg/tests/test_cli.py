"""End-to-end tests of the command line interface.

Commands run in-process through ``main(argv)`` so exit codes and stdout are
asserted directly; one test shells out to the installed entry points.
"""

import hashlib
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from segnoise import (MarkovNoiseParams, dilate_one, estimate_bias, generate,
                      signed_distance)
from segnoise.cli import main
from segnoise.formats import load_field, load_mask, save_field, save_mask


def run(capsys, *argv):
    rc = main(list(argv))
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def make_dataset(capsys, out: Path, count=6, size="24x24", seed=0, **extra):
    argv = ["synth", "--count", str(count), "--size", size, "--seed", str(seed),
            "--blur-sigma", "1.0", "--noise-sigma", "0.2", "--out", str(out)]
    for flag, value in extra.items():
        argv += [f"--{flag}", str(value)]
    rc, out_text, _ = run(capsys, *argv)
    assert rc == 0, out_text
    return out / "images", out / "masks"


# ---------------------------------------------------------------- bound


def test_bound_prints_the_worked_value(capsys):
    rc, out, _ = run(capsys, "bound", "--eps0", "1", "--eps1", "20", "--eps", "2",
                     "--alpha", "0.05", "--image-size", "65536")
    assert rc == 0
    assert out.strip() == "2956"


def test_bound_rejects_slack_below_the_floor(capsys):
    rc, _, err = run(capsys, "bound", "--eps0", "2", "--eps1", "20", "--eps", "1",
                     "--alpha", "0.05", "--image-size", "65536")
    assert rc == 2
    assert "error:" in err


# ---------------------------------------------------------------- usage errors


def test_missing_subcommand_is_a_usage_error(capsys):
    rc, _, err = run(capsys)
    assert rc == 1
    assert "usage error" in err


def test_unknown_flag_is_a_usage_error(capsys):
    rc, _, err = run(capsys, "bound", "--nope", "1")
    assert rc == 1
    assert "usage error" in err


# ---------------------------------------------------------------- synth


def test_synth_writes_loadable_images_and_masks(tmp_path, capsys):
    images_dir, masks_dir = make_dataset(capsys, tmp_path / "ds", count=4)
    images = sorted(images_dir.iterdir())
    masks = sorted(masks_dir.iterdir())
    assert len(images) == len(masks) == 4
    img = load_field(images[0])
    mask = load_mask(masks[0])
    assert img.shape == mask.shape == (24, 24)
    assert img.dtype == np.float32 and mask.dtype == bool
    assert mask.any() and not mask.all()


def test_synth_can_write_pgm_masks(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=2, format="pgm")
    files = sorted(masks_dir.iterdir())
    assert [p.suffix for p in files] == [".pgm", ".pgm"]
    assert load_mask(files[0]).dtype == bool


def test_synth_same_seed_same_bytes(tmp_path, capsys):
    make_dataset(capsys, tmp_path / "a", count=3, seed=9)
    make_dataset(capsys, tmp_path / "b", count=3, seed=9)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


# ---------------------------------------------------------------- gen-noise


def test_gen_noise_with_explicit_thetas_stays_local(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1, size="32x32")
    src = next(masks_dir.iterdir())
    out = tmp_path / "noisy.gtf"
    rc, _, _ = run(capsys, "gen-noise", "--mask", str(src), "-T", "3",
                   "--theta1", "0.8", "--theta2", "0.6", "--seed", "5",
                   "--out", str(out))
    assert rc == 0
    clean = load_mask(src)
    noisy = load_mask(out)
    changed = clean != noisy
    assert changed.any()
    assert np.all(np.abs(signed_distance(clean)[changed]) <= 3)


def test_gen_noise_zero_steps_copies_the_mask(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1)
    src = next(masks_dir.iterdir())
    out = tmp_path / "same.gtf"
    rc, _, _ = run(capsys, "gen-noise", "--mask", str(src), "-T", "0",
                   "--theta1", "0.5", "--theta2", "0.5", "--out", str(out))
    assert rc == 0
    assert np.array_equal(load_mask(src), load_mask(out))


def test_gen_noise_named_preset(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1, size="32x32")
    src = next(masks_dir.iterdir())
    rc, _, _ = run(capsys, "gen-noise", "--mask", str(src), "--preset", "tiny-se",
                   "--seed", "2", "--out", str(tmp_path / "n.gtf"))
    assert rc == 0


def test_gen_noise_unknown_preset_exits_1(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1)
    src = next(masks_dir.iterdir())
    rc, _, err = run(capsys, "gen-noise", "--mask", str(src), "--preset", "bogus",
                     "--out", str(tmp_path / "n.gtf"))
    assert rc == 1
    assert "unknown preset" in err


def test_gen_noise_without_preset_needs_all_thetas(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1)
    src = next(masks_dir.iterdir())
    rc, _, err = run(capsys, "gen-noise", "--mask", str(src), "-T", "2",
                     "--out", str(tmp_path / "n.gtf"))
    assert rc == 1
    assert "--theta1" in err


def test_gen_noise_config_file_preset_matches_the_library(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1, size="32x32")
    src = next(masks_dir.iterdir())
    cfg = tmp_path / "extra.ini"
    cfg.write_text("[preset.demo]\nT = 2\ntheta1 = 0.9\ntheta2 = 0.5\n")
    out = tmp_path / "n.gtf"
    rc, _, _ = run(capsys, "gen-noise", "--mask", str(src), "--config", str(cfg),
                   "--preset", "demo", "--seed", "7", "--out", str(out))
    assert rc == 0
    params = MarkovNoiseParams(steps=2, theta1=0.9, theta2=0.5, seed=7)
    assert np.array_equal(load_mask(out), generate(load_mask(src), params))


def test_gen_noise_same_seed_same_bytes(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1, size="32x32")
    src = next(masks_dir.iterdir())
    for name in ("a.gtf", "b.gtf"):
        rc, _, _ = run(capsys, "gen-noise", "--mask", str(src), "-T", "4",
                       "--theta1", "0.7", "--theta2", "0.5", "--theta3", "0.05",
                       "--seed", "3", "--out", str(tmp_path / name))
        assert rc == 0
    assert (tmp_path / "a.gtf").read_bytes() == (tmp_path / "b.gtf").read_bytes()


# ---------------------------------------------------------------- sdf


def test_sdf_command_matches_the_library(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=1)
    src = next(masks_dir.iterdir())
    out = tmp_path / "phi.gtf"
    rc, _, _ = run(capsys, "sdf", "--mask", str(src), "--out", str(out))
    assert rc == 0
    expected = signed_distance(load_mask(src)).astype(np.float32)
    assert np.array_equal(load_field(out), expected)


def test_sdf_uniform_mask_exits_2(tmp_path, capsys):
    path = tmp_path / "full.gtf"
    save_mask(np.ones((8, 8), dtype=bool), path)
    rc, _, err = run(capsys, "sdf", "--mask", str(path), "--out", str(tmp_path / "phi.gtf"))
    assert rc == 2
    assert "error:" in err


def test_corrupt_file_reports_a_byte_offset(tmp_path, capsys):
    path = tmp_path / "trunc.gtf"
    save_mask(np.zeros((8, 8), dtype=bool) | (np.eye(8) > 0), path)
    path.write_bytes(path.read_bytes()[:-5])
    rc, _, err = run(capsys, "sdf", "--mask", str(path), "--out", str(tmp_path / "phi.gtf"))
    assert rc == 2
    assert "at byte" in err


# ---------------------------------------------------------------- estimate-bias


def test_estimate_bias_reports_the_dilation_gap(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=4, size="32x32")
    pred_dir = tmp_path / "pred"
    pred_dir.mkdir()
    masks = [load_mask(p) for p in sorted(masks_dir.iterdir())]
    for i, m in enumerate(masks):
        save_mask(dilate_one(m), pred_dir / f"mask_{i:05d}.gtf")
    expected = estimate_bias([signed_distance(dilate_one(m)) for m in masks],
                             [signed_distance(m) for m in masks])
    csv_out = tmp_path / "gaps.csv"
    rc, out, _ = run(capsys, "estimate-bias", "--pred-dir", str(pred_dir),
                     "--clean-dir", str(masks_dir), "--out", str(csv_out))
    assert rc == 0
    assert f"delta_hat {expected.delta_hat!r}" in out
    assert "over 4 image pairs (0 skipped)" in out
    lines = csv_out.read_text().splitlines()
    assert lines[0] == "pred_file,clean_file,gap"
    assert len(lines) == 5 and all(line.rsplit(",", 1)[1] for line in lines[1:])


def test_estimate_bias_rejects_raw_logit_fields(tmp_path, capsys):
    # logits are not distances: feeding them in would skew the estimate by
    # their arbitrary scale, so the loader insists on SDF-shaped values
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=2)
    pred_dir = tmp_path / "logits"
    pred_dir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        save_field(rng.normal(size=(24, 24)), pred_dir / f"p_{i}.gtf")
    rc, _, err = run(capsys, "estimate-bias", "--pred-dir", str(pred_dir),
                     "--clean-dir", str(masks_dir))
    assert rc == 2
    assert "not a signed distance field" in err


def test_estimate_bias_count_mismatch_exits_2(tmp_path, capsys):
    _, masks_dir = make_dataset(capsys, tmp_path / "ds", count=2)
    pred_dir = tmp_path / "pred"
    pred_dir.mkdir()
    save_mask(load_mask(next(iter(sorted(masks_dir.iterdir())))), pred_dir / "one.gtf")
    rc, _, err = run(capsys, "estimate-bias", "--pred-dir", str(pred_dir),
                     "--clean-dir", str(masks_dir))
    assert rc == 2
    assert "error:" in err


# ---------------------------------------------------------------- train/predict/correct


def test_train_predict_correct_roundtrip(tmp_path, capsys):
    images_dir, masks_dir = make_dataset(capsys, tmp_path / "ds", count=6)
    model_path = tmp_path / "model.json"
    rc, _, _ = run(capsys, "train", "--images-dir", str(images_dir),
                   "--labels-dir", str(masks_dir), "--epochs", "80",
                   "--out", str(model_path))
    assert rc == 0 and model_path.exists()

    logits_dir = tmp_path / "logits"
    rc, _, _ = run(capsys, "predict", "--model", str(model_path),
                   "--images-dir", str(images_dir), "--out-dir", str(logits_dir))
    assert rc == 0
    logit_files = sorted(logits_dir.iterdir())
    assert len(logit_files) == 6
    assert load_field(logit_files[0]).dtype == np.float32

    out_dir = tmp_path / "corrected"
    rc, out, _ = run(capsys, "correct", "--logits-dir", str(logits_dir),
                     "--delta", "-1.0", "--out-dir", str(out_dir))
    assert rc == 0
    assert "wrote 6 corrected masks" in out
    assert load_mask(sorted(out_dir.iterdir())[0]).dtype == bool


def test_predict_same_model_same_bytes(tmp_path, capsys):
    images_dir, masks_dir = make_dataset(capsys, tmp_path / "ds", count=3)
    model_path = tmp_path / "model.json"
    run(capsys, "train", "--images-dir", str(images_dir), "--labels-dir",
        str(masks_dir), "--epochs", "40", "--out", str(model_path))
    for name in ("p1", "p2"):
        rc, _, _ = run(capsys, "predict", "--model", str(model_path),
                       "--images-dir", str(images_dir), "--out-dir", str(tmp_path / name))
        assert rc == 0
    assert tree_digest(tmp_path / "p1") == tree_digest(tmp_path / "p2")


def test_train_same_seed_same_model(tmp_path, capsys):
    images_dir, masks_dir = make_dataset(capsys, tmp_path / "ds", count=3)
    for name in ("m1.json", "m2.json"):
        rc, _, _ = run(capsys, "train", "--images-dir", str(images_dir),
                       "--labels-dir", str(masks_dir), "--epochs", "40",
                       "--seed", "6", "--out", str(tmp_path / name))
        assert rc == 0
    assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


# ---------------------------------------------------------------- sc-run


def test_sc_run_local_trainer(tmp_path, capsys):
    images_dir, masks_dir = make_dataset(capsys, tmp_path / "train", count=10,
                                         size="32x32", seed=1)
    val_images, val_masks = make_dataset(capsys, tmp_path / "val", count=4,
                                         size="32x32", seed=2)
    labels_dir = tmp_path / "labels"
    labels_dir.mkdir()
    for path in sorted(masks_dir.iterdir()):
        rc, _, _ = run(capsys, "gen-noise", "--mask", str(path), "-T", "6",
                       "--theta1", "0.9", "--theta2", "0.6", "--seed", "11",
                       "--out", str(labels_dir / path.name))
        assert rc == 0
    out = tmp_path / "run"
    rc, text, _ = run(capsys, "sc-run", "--train-images", str(images_dir),
                      "--train-labels", str(labels_dir), "--val-images", str(val_images),
                      "--val-masks", str(val_masks), "--truth-dir", str(masks_dir),
                      "--max-iters", "2", "--epochs", "60", "--seed", "4",
                      "--out", str(out))
    assert rc == 0
    assert "finished after" in text
    report = (out / "report.csv").read_text().splitlines()
    assert report[0] == "iter,delta_hat,lambda_mean,train_label_dsc_vs_truth,val_dsc"
    assert len(report) >= 2
    assert len(list((out / "corrected").iterdir())) == 10
    assert (out / "model.json").exists()


# ---------------------------------------------------------------- verify


def test_verify_lemma1_passes_and_writes_a_report(tmp_path, capsys):
    report = tmp_path / "report.csv"
    rc, out, _ = run(capsys, "verify", "lemma1", "--theta1", "0.7", "--theta2", "0.9",
                     "--samples", "3000", "--size", "16x16", "--seed", "1",
                     "--threads", "2", "--out", str(report))
    assert rc == 0
    assert out.startswith("PASS")
    lines = report.read_text().splitlines()
    assert lines[0] == "key,value"
    assert "measurements.n_disagree,0" in lines


@pytest.mark.filterwarnings("ignore:theta3=0.45")
def test_verify_lemma1_reports_an_honest_failure(capsys):
    # theta3 just under 1/2 with a weak walk flips the boundary majority away
    # from the flip-free closed form: decided disagreements, exit code 3
    rc, out, _ = run(capsys, "verify", "lemma1", "--theta1", "0.5", "--theta2", "0.6",
                     "--theta3", "0.45", "--samples", "4000", "--size", "16x16",
                     "--seed", "1")
    assert rc == 3
    assert out.startswith("FAIL")


def test_verify_theorem1_cli(capsys):
    rc, out, _ = run(capsys, "verify", "theorem1", "--eps0", "0.5", "--eps1", "2",
                     "--eps", "1", "--alpha", "0.5", "--image-size", "1024",
                     "--trials", "10", "--holdout", "10", "--seed", "3")
    assert rc == 0
    assert out.startswith("PASS")
    assert "V=67" in out


def test_verify_theorem1_rejects_bad_inputs(capsys):
    rc, _, err = run(capsys, "verify", "theorem1", "--eps0", "1", "--eps1", "0.5",
                     "--eps", "2", "--alpha", "0.05", "--image-size", "1024",
                     "--trials", "5")
    assert rc == 2
    assert "error:" in err


# ---------------------------------------------------------------- sweep


def test_sweep_cli_writes_the_grid(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    rc, text, _ = run(capsys, "sweep", "--kind", "val_size", "--values", "2,4",
                      "--count", "16", "--size", "24x24", "--blur-sigma", "1.0",
                      "--noise-sigma", "0.2", "-T", "2", "--theta1", "0.8",
                      "--theta2", "0.6", "--epochs", "60", "--max-iters", "2",
                      "--n-val", "4", "--n-test", "4", "--seed", "2",
                      "--out", str(out))
    assert rc == 0
    assert "wrote 6 rows" in text
    lines = out.read_text().splitlines()
    assert lines[0] == "kind,value,arm,seed,test_dsc"
    assert len(lines) == 7
    assert {line.split(",")[1] for line in lines[1:]} == {"2", "4"}


# ---------------------------------------------------------------- entry points


def test_installed_entry_points_answer(tmp_path):
    argv = ["bound", "--eps0", "1", "--eps1", "20", "--eps", "2",
            "--alpha", "0.05", "--image-size", "65536"]
    as_module = subprocess.run([sys.executable, "-m", "segnoise", *argv],
                               capture_output=True, text=True)
    assert as_module.returncode == 0 and as_module.stdout.strip() == "2956"
    as_script = subprocess.run(["segnoise", *argv], capture_output=True, text=True)
    assert as_script.returncode == 0 and as_script.stdout.strip() == "2956"

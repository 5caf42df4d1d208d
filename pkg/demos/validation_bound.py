"""How many clean validation images does bias estimation need?

required_validation_size answers with a concentration bound: enough images
that, with probability at least 1 - alpha, the residual shift after
correction stays below the requested slack everywhere on the grid.
verify_validation_bound then checks the bound empirically on a synthetic
pool, re-drawing predictor offsets every trial.
"""

from segnoise import (ValidationBoundInputs, required_validation_size,
                      verify_validation_bound)

print("worked example: offsets average 1 pixel, worst case 20, slack 2,")
print("alpha 0.05, 256x256 images ->",
      required_validation_size(ValidationBoundInputs(1.0, 20.0, 2.0, 0.05, 65536)),
      "validation images\n")

print("the bound scales with the square of (worst case / slack):")
print(f"  {'eps1':>6} {'eps':>5} {'alpha':>6} -> V")
for eps1, eps, alpha in [(4.0, 2.0, 0.05), (8.0, 2.0, 0.05), (20.0, 2.0, 0.05),
                         (20.0, 4.0, 0.05), (20.0, 2.0, 0.20)]:
    v = required_validation_size(ValidationBoundInputs(1.0, eps1, eps, alpha, 65536))
    print(f"  {eps1:6.1f} {eps:5.1f} {alpha:6.2f} -> {v}")

print("\ndesk-scale empirical check (32x32 pool, 40 trials):")
inputs = ValidationBoundInputs(eps0=0.5, eps1=2.0, eps=1.0, alpha=0.5, image_size=1024)
rep = verify_validation_bound(inputs, n_trials=40, holdout=30, seed=0)
m = rep.measurements
print(f"  V={m['v_required']}, failures {m['failures']}/40 "
      f"(allowed rate {inputs.alpha}), passed={rep.passed}")
print(f"  mean held-out error {m['mean_error']:.3f} vs threshold {m['fail_threshold']:.3f}")

default_budget = {
    "seconds": 30.0,
    "branches": 20000,
}

default_sweep = {
    "network": "quadrant-net.json",
    "dataset": {"synthetic": {"seed": 8, "count": 50, "side": 8, "num_classes": 4}},
    "downscale": 1,
    "epsilons": [0.0, 0.05, 0.1, 0.15, 0.2],
    "betas": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    "gammas": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "mu": 0.2585,
    "query_budget": default_budget,
    "anchor_seconds": 60.0,
    "contrast_seconds": 60.0,
    "falsifier_samples": 256,
    "seed": 0,
    "output": "results",
    "run_contrast": True,
}

default_synthetic = {
    "seed": 7,
    "count": 200,
    "side": 8,
    "num_classes": 4,
}

"""Published inference results, kept only for side-by-side display in experiment reports.

Nothing in training or validation reads these values.
"""

# (pattern, set) -> parameter -> (mean, variance, error %); "data_loss" -> mean data loss
PUBLISHED_TABLES = {
    ("P", "A"): {"d1": (0.511, None, 1.1), "d2": (1.874, None, 6.3), "data_loss": 7.3e-6},
    ("P", "B"): {"alpha": (0.911, None, 1.4), "beta": (-0.915, None, 0.5), "data_loss": 8.4e-6},
    ("P", "C"): {
        "d1": (0.645, 1.3e-4, 25.0), "d2": (0.242, 2.0e-3, 87.9),
        "alpha": (0.715, 4.3e-5, 20.4), "beta": (-0.999, 7.0e-7, 9.8), "data_loss": 3.7e-6,
    },
    ("P", "D"): {
        "d1": (0.498, 4.5e-4, 3.5), "alpha": (0.904, 9.0e-5, 0.6), "beta": (-0.896, 2.5e-4, 1.5),
        "data_loss": 5.9e-6,
    },
    ("P", "E"): {
        "d1": (0.494, 2.7e-4, 4.2), "alpha": (0.914, 1.7e-4, 1.6), "beta": (-0.894, 8.8e-5, 1.8),
        "r1": (4.970, 9.6e-1, 42.0), "data_loss": 5.7e-6,
    },
    ("Q", "C"): {
        "d1": (0.410, 1.9e-3, 36.7), "d2": (0.026, 4.6e-4, 98.7),
        "alpha": (0.468, 2.6e-5, 33.1), "beta": (-1.000, 2.2e-7, 33.3), "data_loss": 1.5e-5,
    },
    # original-solution cluster only; one restart found an alternative
    ("Q", "D"): {
        "d1": (0.244, 5.8e-5, 18.7), "alpha": (0.683, 3.6e-5, 2.4), "beta": (-0.610, 2.7e-4, 18.6),
        "data_loss": 2.1e-5,
    },
    ("Q", "E"): {
        "d1": (0.261, 1.2e-4, 13.0), "alpha": (0.716, 3.3e-4, 2.3), "beta": (-0.645, 4.9e-4, 14.0),
        "r1": (6.071, 1.2, 73.5), "data_loss": 3.2e-5,
    },
    ("R", "D"): {
        "d1": (0.451, 6.2e-5, 12.7), "alpha": (0.871, 2.5e-4, 3.2), "beta": (-0.890, 1.5e-4, 2.2),
        "data_loss": 2.0,
    },
}

PUBLISHED_ALTERNATIVES = {
    ("P", "C"): {"d1": 0.618, "d2": 0.188, "alpha": 0.707, "beta": -0.997},
    ("P", "E"): {"d1": 0.455, "alpha": 0.890, "beta": -0.872, "r1": 4.152},
    ("Q", "D"): {"d1": 0.218, "alpha": 0.662, "beta": -0.571},
    ("Q", "E"): {"d1": 0.252, "alpha": 0.708, "beta": -0.626, "r1": 5.982},
}

PUBLISHED_MODES = {"P": 0.42, "Q": 0.60, "R": 0.42}

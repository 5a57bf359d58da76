//! Fixed evaluation points and standard parameter settings.

/// Query points for comparing Boulevard with its ridge-regression limit.
pub const KRR_POINTS: [[f64; 5]; 4] = [
    [0.1, 0.1, 0.1, 0.1, 0.1],
    [0.6, 0.9, 0.8, 0.9, 0.7],
    [0.1, 0.1, 0.9, 0.9, 0.9],
    [0.9, 0.1, 0.1, 0.1, 0.9],
];

/// Query points for the limiting-distribution, interval and variance runs.
pub const INFERENCE_POINTS: [[f64; 5]; 10] = [
    [0.5, 0.5, 0.5, 0.5, 0.5],
    [0.2, 0.2, 0.2, 0.2, 0.2],
    [0.1, 0.9, 0.1, 0.9, 0.1],
    [0.1, 0.1, 0.9, 0.9, 0.9],
    [0.9, 0.1, 0.1, 0.1, 0.9],
    [0.5, 0.1, 0.9, 0.1, 0.5],
    [0.3, 0.2, 0.7, 0.8, 0.6],
    [0.4, 0.2, 0.3, 0.6, 0.7],
    [0.2, 0.7, 0.8, 0.3, 0.5],
    [0.3, 0.6, 0.4, 0.9, 0.5],
];

pub fn as_vectors<const D: usize>(points: &[[f64; D]]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.to_vec()).collect()
}

/// One named parameter setting. `leaf_size` counts points
/// after subsampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    pub label: &'static str,
    pub n: usize,
    pub theta: f64,
    pub trees: usize,
    pub leaf_size: usize,
    pub lambda: f64,
}

pub const SETTINGS: [Setting; 9] = [
    Setting {
        label: "mse",
        n: 5000,
        theta: 0.3,
        trees: 1000,
        leaf_size: 20,
        lambda: 0.8,
    },
    Setting {
        label: "boston",
        n: 506,
        theta: 0.8,
        trees: 1000,
        leaf_size: 5,
        lambda: 0.8,
    },
    Setting {
        label: "ccpp",
        n: 9568,
        theta: 0.5,
        trees: 1000,
        leaf_size: 50,
        lambda: 0.8,
    },
    Setting {
        label: "casp",
        n: 20000,
        theta: 0.5,
        trees: 1000,
        leaf_size: 50,
        lambda: 0.8,
    },
    Setting {
        label: "airfoil",
        n: 1503,
        theta: 0.8,
        trees: 1000,
        leaf_size: 40,
        lambda: 0.8,
    },
    Setting {
        label: "limiting",
        n: 1000,
        theta: 0.8,
        trees: 2000,
        leaf_size: 10,
        lambda: 0.5,
    },
    Setting {
        label: "variance",
        n: 5000,
        theta: 0.8,
        trees: 3000,
        leaf_size: 20,
        lambda: 0.5,
    },
    Setting {
        label: "ri-small",
        n: 1000,
        theta: 0.8,
        trees: 2000,
        leaf_size: 10,
        lambda: 0.5,
    },
    Setting {
        label: "ri-large",
        n: 5000,
        theta: 0.8,
        trees: 2000,
        leaf_size: 10,
        lambda: 0.5,
    },
];

pub fn setting(label: &str) -> Option<Setting> {
    SETTINGS.iter().copied().find(|s| s.label == label)
}

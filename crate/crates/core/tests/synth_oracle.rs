mod common;

use spml::synth::{self, SynthConfig};

/// Full-batch gradient descent on per-label logistic regression, written
/// independently of the library trainer.
fn fit_full_labels(x: &[Vec<f64>], y: &[Vec<bool>], steps: usize, lr: f64) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let l = y[0].len();
    let mut w = vec![vec![0.0; d + 1]; l];
    for _ in 0..steps {
        for (c, wc) in w.iter_mut().enumerate() {
            let mut g = vec![0.0; d + 1];
            for (xi, yi) in x.iter().zip(y) {
                let z = wc[d] + xi.iter().zip(&wc[..d]).map(|(a, b)| a * b).sum::<f64>();
                let r = common::sigmoid(z) - if yi[c] { 1.0 } else { 0.0 };
                for j in 0..d {
                    g[j] += r * xi[j];
                }
                g[d] += r;
            }
            for (wj, gj) in wc.iter_mut().zip(&g) {
                *wj -= lr * gj / x.len() as f64;
            }
        }
    }
    w
}

#[test]
fn noiseless_corpus_is_linearly_separable() {
    let cfg = SynthConfig { n_train: 150, n_test: 10, num_labels: 5, dim: 16, noise_sigma: 0.0, seed: 21, ..SynthConfig::default() };
    let corpus = synth::generate(&cfg).unwrap();
    let x: Vec<Vec<f64>> = corpus
        .train
        .images()
        .iter()
        .map(|img| corpus.train_features.features_of(img.image_id()).unwrap().iter().map(|&v| f64::from(v)).collect())
        .collect();
    let y: Vec<Vec<bool>> = corpus.train.images().iter().map(|img| img.labels().to_vec()).collect();
    let w = fit_full_labels(&x, &y, 400, 0.5);

    let d = cfg.dim;
    let mut aps = Vec::new();
    for (c, wc) in w.iter().enumerate() {
        let scores: Vec<f64> = x.iter().map(|xi| wc[d] + xi.iter().zip(&wc[..d]).map(|(a, b)| a * b).sum::<f64>()).collect();
        let labels: Vec<bool> = y.iter().map(|yi| yi[c]).collect();
        if let Some(ap) = common::brute_force_ap(&scores, &labels) {
            aps.push(ap);
        }
    }
    let map = 100.0 * aps.iter().sum::<f64>() / aps.len() as f64;
    assert_eq!(map, 100.0);
}

#[test]
fn generated_corpora_satisfy_dataset_invariants() {
    for seed in 0..5 {
        let cfg = SynthConfig { n_train: 60, n_test: 20, num_labels: 1 + seed as usize * 2, dim: 12, seed, zero_area_rate: 0.1, centered_rate: 0.2, ..SynthConfig::default() };
        let corpus = synth::generate(&cfg).unwrap();
        for ds in [&corpus.train, &corpus.test] {
            assert!(ds.images().iter().all(|img| img.labels().iter().any(|&b| b)));
            for img in ds.images() {
                for inst in img.instances() {
                    assert!(img.labels()[inst.category]);
                    assert!(inst.bbox.x() + inst.bbox.w() <= f64::from(img.width()));
                    assert!(inst.bbox.y() + inst.bbox.h() <= f64::from(img.height()));
                }
            }
        }
        assert_eq!(corpus.train_features.len(), 60);
        assert_eq!(corpus.test_features.dim(), 12);
    }
}

//! Shuffled-label control: the network readout must fall to chance.

use qrc_core::bench::{
    evaluate_readout, fit_readout, generate_dataset_with, simulate_features, GridOptions, Label,
    Readout, RepeatSeeds, SweepBase, Task,
};
use qrc_core::seed;
use rand::seq::SliceRandom;

const REPEATS: usize = 10;

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let task = Task::Classification;
    let mut base = SweepBase::desk_scale(task);
    base.n_nodes = 3;
    base.n_trajectories = 256;
    base.n_samples = 100;
    let mut accuracies = Vec::new();
    for r in 0..REPEATS {
        let seeds = RepeatSeeds::new(77, r);
        let mut dataset =
            generate_dataset_with(task, base.n_samples, seeds.dataset, &GridOptions::default())
                .unwrap();
        let mut labels: Vec<Label> = dataset.samples.iter().map(|s| s.label.clone()).collect();
        labels.shuffle(&mut seed::stream(seeds.readout, seed::label::SHUFFLE));
        for (sample, label) in dataset.samples.iter_mut().zip(labels) {
            sample.label = label;
        }
        let config = base.reservoir(base.n_nodes, base.kerr, seeds.reservoir).unwrap();
        let features = simulate_features(&config, &dataset, &base.readout, seeds.readout).unwrap();
        let fitted = fit_readout(&dataset, &features, Readout::Eqss, &base.readout, seeds.readout).unwrap();
        accuracies.push(evaluate_readout(&dataset, &features, &fitted).unwrap().metric);
    }
    let mean = accuracies.iter().sum::<f64>() / REPEATS as f64;
    assert!(
        (mean - 1.0 / 3.0).abs() <= 0.1,
        "mean accuracy {mean} over {accuracies:?}"
    );
}

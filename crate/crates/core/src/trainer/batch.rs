use rand::seq::{IndexedRandom, SliceRandom};

use crate::data::{DomainDataset, Task, TimeSeriesSample};
use crate::error::{Error, Result};
use crate::rng;

/// Keeps every faulty sample and an equal-size uniform subset of normal
/// samples, preserving time order.
pub fn downsample_normals(ds: &DomainDataset, seed: u64) -> Result<DomainDataset> {
    if ds.task != Task::Classification {
        return Err(Error::Data("down-sampling needs a classification dataset".into()));
    }
    let faulty = ds.count_class(1);
    let normal = ds.count_class(0);
    if faulty == 0 {
        return Err(Error::Data("no faulty samples to balance against".into()));
    }
    if normal < faulty {
        return Err(Error::Data(format!("only {normal} normal samples for {faulty} faulty")));
    }
    let normal_idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].class() == 0).collect();
    let mut r = rng::stream(seed, "downsample", &[]);
    let mut keep = vec![false; ds.len()];
    for &i in normal_idx.choose_multiple(&mut r, faulty) {
        keep[i] = true;
    }
    let samples = ds
        .samples
        .iter()
        .zip(keep)
        .filter(|(s, k)| *k || s.class() == 1)
        .map(|(s, _)| s.clone())
        .collect();
    DomainDataset::new(ds.domain, ds.task, samples)
}

/// One optimization step's worth of samples.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    /// Labelled source samples.
    pub labelled: Vec<&'a TimeSeriesSample>,
    /// First half of the labelled batch followed by as many target samples.
    pub mixed: Vec<&'a TimeSeriesSample>,
}

/// Seeded batch schedule. An epoch is one pass over the source set with the
/// remainder dropped; target samples cycle independently and are reshuffled
/// each time they run out.
#[derive(Debug, Clone)]
pub struct Batcher<'a> {
    source: &'a DomainDataset,
    target: Option<&'a DomainDataset>,
    batch_size: usize,
    seed: u64,
    target_order: Vec<usize>,
    target_cursor: usize,
    target_cycle: u64,
}

impl<'a> Batcher<'a> {
    /// `target` is `None` for source-only training.
    pub fn new(
        source: &'a DomainDataset,
        target: Option<&'a DomainDataset>,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 || batch_size > source.len() {
            return Err(Error::Config(format!(
                "batch size {batch_size} does not fit a source set of {}",
                source.len()
            )));
        }
        if let Some(t) = target {
            if batch_size < 2 {
                return Err(Error::Config("adversarial training needs batch size >= 2".into()));
            }
            if batch_size / 2 > t.len() {
                return Err(Error::Config(format!(
                    "half batch {} does not fit a target set of {}",
                    batch_size / 2,
                    t.len()
                )));
            }
        }
        Ok(Batcher {
            source,
            target,
            batch_size,
            seed,
            target_order: Vec::new(),
            target_cursor: 0,
            target_cycle: 0,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.source.len() / self.batch_size
    }

    fn next_targets(&mut self, n: usize) -> Vec<&'a TimeSeriesSample> {
        let target = self.target.expect("target set present");
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.target_cursor == self.target_order.len() {
                self.target_order = (0..target.len()).collect();
                let mut r = rng::stream(self.seed, "target-shuffle", &[self.target_cycle]);
                self.target_order.shuffle(&mut r);
                self.target_cycle += 1;
                self.target_cursor = 0;
            }
            out.push(&target.samples[self.target_order[self.target_cursor]]);
            self.target_cursor += 1;
        }
        out
    }

    /// Batches of epoch `epoch`. Epochs must be requested in order for the
    /// target cycle to be reproducible.
    pub fn epoch(&mut self, epoch: u64) -> Vec<Batch<'a>> {
        let mut order: Vec<usize> = (0..self.source.len()).collect();
        order.shuffle(&mut rng::stream(self.seed, "source-shuffle", &[epoch]));
        let b = self.batch_size;
        let mut out = Vec::with_capacity(self.batches_per_epoch());
        for chunk in order.chunks_exact(b) {
            let labelled: Vec<&TimeSeriesSample> = chunk.iter().map(|&i| &self.source.samples[i]).collect();
            let mixed = if self.target.is_some() {
                let mut m: Vec<&TimeSeriesSample> = labelled[..b / 2].to_vec();
                m.extend(self.next_targets(b / 2));
                m
            } else {
                Vec::new()
            };
            out.push(Batch { labelled, mixed });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Domain;
    use crate::tensor::Tensor;

    fn dataset(domain: Domain, task: Task, labels: &[f64]) -> DomainDataset {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| TimeSeriesSample {
                x: Tensor::full(&[2, 1], i as f64),
                y,
                domain,
                latent: None,
            })
            .collect();
        DomainDataset::new(domain, task, samples).unwrap()
    }

    fn classes(n_normal: usize, n_fault: usize) -> DomainDataset {
        let mut labels = vec![0.0; n_normal];
        labels.extend(std::iter::repeat_n(1.0, n_fault));
        dataset(Domain::Source, Task::Classification, &labels)
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let ds = classes(10, 10);
        assert_eq!(downsample_normals(&ds, 3).unwrap(), ds);
    }

    #[test]
    fn normals_are_cut_to_the_fault_count() {
        let ds = classes(100, 10);
        let out = downsample_normals(&ds, 3).unwrap();
        assert_eq!((out.count_class(0), out.count_class(1)), (10, 10));
        assert_eq!(out, downsample_normals(&ds, 3).unwrap());
        assert_ne!(out, downsample_normals(&ds, 4).unwrap());
        let ids: Vec<f64> = out.samples.iter().map(|s| s.x.data()[0]).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn downsampling_needs_faults() {
        assert!(matches!(downsample_normals(&classes(5, 0), 1), Err(Error::Data(_))));
        let reg = dataset(Domain::Source, Task::Regression, &[1.0, 2.0]);
        assert!(downsample_normals(&reg, 1).is_err());
    }

    #[test]
    fn epoch_covers_source_once() {
        let src = dataset(Domain::Source, Task::Regression, &[1.0, 2.0, 3.0, 4.0]);
        let tgt = dataset(Domain::Target, Task::Regression, &[5.0, 6.0, 7.0]);
        let mut b = Batcher::new(&src, Some(&tgt), 2, 9).unwrap();
        let e = b.epoch(0);
        assert_eq!(e.len(), 2);
        let mut seen: Vec<f64> = e.iter().flat_map(|bt| bt.labelled.iter().map(|s| s.y)).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![1.0, 2.0, 3.0, 4.0]);
        for bt in &e {
            assert_eq!(bt.mixed.len(), 2);
            assert_eq!(bt.mixed[0].domain, Domain::Source);
            assert_eq!(bt.mixed[1].domain, Domain::Target);
            assert!(std::ptr::eq(bt.mixed[0], bt.labelled[0]));
        }
    }

    #[test]
    fn schedule_is_seeded() {
        let src = dataset(Domain::Source, Task::Regression, &(0..20).map(f64::from).collect::<Vec<_>>());
        let tgt = dataset(Domain::Target, Task::Regression, &(0..7).map(f64::from).collect::<Vec<_>>());
        let run = |seed| {
            let mut b = Batcher::new(&src, Some(&tgt), 4, seed).unwrap();
            (0..3)
                .flat_map(|e| b.epoch(e))
                .map(|bt| bt.mixed.iter().chain(&bt.labelled).map(|s| s.y).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn targets_cycle_through_every_sample() {
        let src = dataset(Domain::Source, Task::Regression, &[0.0; 12]);
        let tgt = dataset(Domain::Target, Task::Regression, &(0..6).map(f64::from).collect::<Vec<_>>());
        let mut b = Batcher::new(&src, Some(&tgt), 4, 5).unwrap();
        let mut drawn: Vec<f64> = b.epoch(0).iter().flat_map(|bt| bt.mixed[2..].iter().map(|s| s.y)).collect();
        drawn.sort_by(f64::total_cmp);
        assert_eq!(drawn, (0..6).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn oversized_batches_are_configuration_errors() {
        let src = dataset(Domain::Source, Task::Regression, &[1.0, 2.0, 3.0]);
        let tgt = dataset(Domain::Target, Task::Regression, &[1.0]);
        assert!(matches!(Batcher::new(&src, None, 4, 0), Err(Error::Config(_))));
        assert!(matches!(Batcher::new(&src, Some(&tgt), 1, 0), Err(Error::Config(_))));
        assert!(Batcher::new(&src, Some(&tgt), 3, 0).is_ok());
        let tiny = dataset(Domain::Target, Task::Regression, &[]);
        assert!(matches!(Batcher::new(&src, Some(&tiny), 2, 0), Err(Error::Config(_))));
        let b = Batcher::new(&src, None, 2, 0).unwrap();
        assert_eq!(b.batches_per_epoch(), 1);
    }
}

//! Batch assembly. Every batch is a pure function of (dataset, seed, step),
//! which makes runs reproducible and checkpoint resume exact.

use crate::error::{Error, Result};
use crate::image::{sample_patch, LabeledSample, PairedSample};
use crate::rng::Pcg32;
use crate::tensor::{Shape, Tensor};

/// Labeled images plus the per-channel normalization applied at batch time.
pub struct ClassifyData {
    images: Vec<Tensor<f32>>,
    labels: Vec<usize>,
    pub classes: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl ClassifyData {
    pub fn from_samples(samples: &[LabeledSample], classes: usize) -> Result<ClassifyData> {
        if samples.is_empty() {
            return Err(Error::Data("empty classification dataset".into()));
        }
        let mut mean = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut count = 0usize;
        for s in samples.iter().take(1024) {
            let shape = s.image.shape();
            let plane = shape.h * shape.w;
            for c in 0..3 {
                for i in 0..plane {
                    let v = s.image.data()[c * plane + i] as f64;
                    mean[c] += v;
                    sq[c] += v * v;
                }
            }
            count += plane;
        }
        let mut m = [0.0f32; 3];
        let mut sd = [0.0f32; 3];
        for c in 0..3 {
            let mu = mean[c] / count as f64;
            let var = (sq[c] / count as f64 - mu * mu).max(1e-8);
            m[c] = mu as f32;
            sd[c] = var.sqrt() as f32;
        }
        for s in samples {
            if s.fine >= classes {
                return Err(Error::LabelOutOfRange {
                    label: s.fine,
                    classes,
                });
            }
        }
        Ok(ClassifyData {
            images: samples.iter().map(|s| s.image.clone()).collect(),
            labels: samples.iter().map(|s| s.fine).collect(),
            classes,
            mean: m,
            std: sd,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn normalized_into(&self, index: usize, out: &mut Vec<f32>) {
        let img = &self.images[index];
        let shape = img.shape();
        let plane = shape.h * shape.w;
        for c in 0..3 {
            let (m, s) = (self.mean[c], self.std[c]);
            for i in 0..plane {
                out.push((img.data()[c * plane + i] - m) / s);
            }
        }
    }

    /// Pure function of (seed, step): a random batch with replacement, or
    /// the whole set in fixed order once the batch covers it (the
    /// overfit-one-batch regime).
    pub fn batch(&self, seed: u64, step: u64, batch: usize) -> Result<(Tensor<f32>, Vec<usize>)> {
        let mut rng = Pcg32::for_stream(seed, step);
        let s0 = self.images[0].shape();
        let take = batch.min(self.len());
        let full = take == self.len();
        let mut data = Vec::with_capacity(take * 3 * s0.h * s0.w);
        let mut labels = Vec::with_capacity(take);
        for i in 0..take {
            let idx = if full { i } else { rng.below(self.len()) };
            self.normalized_into(idx, &mut data);
            labels.push(self.labels[idx]);
        }
        let t = Tensor::from_vec(Shape::new(take, 3, s0.h, s0.w)?, data)?;
        Ok((t, labels))
    }

    /// The whole set in fixed order, chunked for evaluation.
    pub fn eval_batches(&self, batch: usize) -> Result<Vec<(Tensor<f32>, Vec<usize>)>> {
        let s0 = self.images[0].shape();
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.len() {
            let hi = (i + batch).min(self.len());
            let mut data = Vec::with_capacity((hi - i) * 3 * s0.h * s0.w);
            for idx in i..hi {
                self.normalized_into(idx, &mut data);
            }
            out.push((
                Tensor::from_vec(Shape::new(hi - i, 3, s0.h, s0.w)?, data)?,
                self.labels[i..hi].to_vec(),
            ));
            i = hi;
        }
        Ok(out)
    }
}

/// Paired HR/LR images with patch sampling parameters.
pub struct SrData {
    pairs: Vec<PairedSample>,
    pub hr_patch: usize,
    pub augment: bool,
}

impl SrData {
    pub fn new(pairs: Vec<PairedSample>, hr_patch: usize, augment: bool) -> Result<SrData> {
        if pairs.is_empty() {
            return Err(Error::Data("empty super-resolution dataset".into()));
        }
        Ok(SrData {
            pairs,
            hr_patch,
            augment,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// (LR batch, HR batch), a pure function of (seed, step).
    pub fn batch(&self, seed: u64, step: u64, batch: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut rng = Pcg32::for_stream(seed, step);
        let hr_patch = self.hr_patch;
        let lr_patch = hr_patch / 4;
        let mut lr_data = Vec::with_capacity(batch * 3 * lr_patch * lr_patch);
        let mut hr_data = Vec::with_capacity(batch * 3 * hr_patch * hr_patch);
        for _ in 0..batch {
            let idx = rng.below(self.pairs.len());
            let patch = sample_patch(&self.pairs[idx], hr_patch, &mut rng, self.augment)?;
            for p in 0..3 {
                lr_data.extend_from_slice(&patch.lr.planes[p]);
            }
            for p in 0..3 {
                hr_data.extend_from_slice(&patch.hr.planes[p]);
            }
        }
        Ok((
            Tensor::from_vec(Shape::new(batch, 3, lr_patch, lr_patch)?, lr_data)?,
            Tensor::from_vec(Shape::new(batch, 3, hr_patch, hr_patch)?, hr_data)?,
        ))
    }
}

/// Task-specific data bundle: training set plus what evaluation needs.
pub enum TaskData {
    Classify { train: ClassifyData, eval: ClassifyData },
    Sr { train: SrData, eval: Vec<PairedSample>, border: usize },
}

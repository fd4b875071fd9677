//! End-to-end word recognition: segment a scene image, classify each crop,
//! assemble the predicted string, and score per-character accuracy.

use crate::augment::AugmentPipeline;
use crate::dataset::id_to_char;
use crate::error::{Error, Result};
use crate::imgproc::{crop, segment_characters, BoundingBox, ImageU8, SegmentParams};
use crate::nn::{softmax, Network};
use crate::tensor::Tensor;

/// Padding added around each character box before classification; glyph
/// strokes touching the crop edge classify worse.
pub const CROP_PAD: usize = 2;

/// Positional per-character score: matches at position i < len(actual),
/// denominator len(actual).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl CharAccuracy {
    pub fn fraction(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Case-insensitive positional comparison; the denominator is the length
/// of `actual`, which must be nonempty.
pub fn char_accuracy(actual: &str, predicted: &str) -> Result<CharAccuracy> {
    if actual.is_empty() {
        return Err(Error::Metric("actual text is empty".into()));
    }
    let a: Vec<char> = actual.chars().flat_map(|c| c.to_lowercase()).collect();
    let p: Vec<char> = predicted.chars().flat_map(|c| c.to_lowercase()).collect();
    let correct = a.iter().zip(&p).filter(|(x, y)| x == y).count();
    Ok(CharAccuracy { correct, total: a.len() })
}

#[derive(Debug, Clone)]
pub struct RecognitionResult {
    pub boxes: Vec<BoundingBox>,
    /// Per surviving box: predicted class id and its softmax confidence.
    pub predictions: Vec<(usize, f32)>,
    pub predicted_text: String,
    pub actual_text: Option<String>,
    pub accuracy: Option<CharAccuracy>,
}

/// Segments `img`, classifies every crop with `net` through the
/// deterministic evaluation pipeline, and assembles the word left to
/// right. Zero detected boxes is an empty prediction, not an error.
pub fn recognize_word(
    img: &ImageU8,
    net: &Network,
    seg: &SegmentParams,
    eval: &AugmentPipeline,
    actual: Option<&str>,
) -> Result<RecognitionResult> {
    let boxes = segment_characters(img, seg)?;
    let mut predictions = Vec::with_capacity(boxes.len());
    let mut predicted_text = String::with_capacity(boxes.len());
    if !boxes.is_empty() {
        let size = eval.image_size();
        let channels = eval.channels();
        let mut batch = Vec::with_capacity(boxes.len() * channels * size * size);
        let mut pipe = eval.clone();
        for bx in &boxes {
            let patch = crop(img, bx, CROP_PAD)?;
            batch.extend_from_slice(pipe.apply(&patch)?.data());
        }
        let batch = Tensor::from_vec(&[boxes.len(), channels, size, size], batch)?;
        let (logits, _) = net.forward(&batch)?;
        let k = logits.shape()[1];
        for row in 0..boxes.len() {
            let row_logits =
                Tensor::from_vec(&[k], logits.data()[row * k..(row + 1) * k].to_vec())?;
            let probs = softmax(&row_logits)?;
            let class = probs.argmax()?;
            predictions.push((class, probs.data()[class]));
            predicted_text.push(id_to_char(class));
        }
    }
    let accuracy = match actual {
        Some(text) => Some(char_accuracy(text, &predicted_text)?),
        None => None,
    };
    Ok(RecognitionResult {
        boxes,
        predictions,
        predicted_text,
        actual_text: actual.map(str::to_owned),
        accuracy,
    })
}

/// Recognizes every (image, actual text) pair and pools the per-character
/// scores into a micro-averaged total.
pub fn evaluate_scene_set(
    pairs: &[(ImageU8, String)],
    net: &Network,
    seg: &SegmentParams,
    eval: &AugmentPipeline,
) -> Result<(Vec<RecognitionResult>, f64)> {
    if pairs.is_empty() {
        return Err(Error::Metric("no scenes to evaluate".into()));
    }
    let mut results = Vec::with_capacity(pairs.len());
    let (mut correct, mut total) = (0usize, 0usize);
    for (img, actual) in pairs {
        let r = recognize_word(img, net, seg, eval, Some(actual))?;
        let acc = r.accuracy.expect("actual text given");
        correct += acc.correct;
        total += acc.total;
        results.push(r);
    }
    Ok((results, correct as f64 / total as f64))
}

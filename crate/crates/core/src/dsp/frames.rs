//! Time-axis padding by cyclic repetition and training-window extraction.

use super::MelSpectrogram;

/// Source frame of every output frame when padding `n_frames` up to `target` by repetition.
///
/// The original occupies a contiguous block; `ceil(d/2)` repeated frames go before it and
/// `floor(d/2)` after it, with `d = target - n_frames`. Inputs at least `target` long map
/// onto themselves.
pub fn pad_repeat_sources(n_frames: usize, target: usize) -> Vec<usize> {
    assert!(n_frames >= 1, "cannot pad an empty spectrogram");
    if n_frames >= target {
        return (0..n_frames).collect();
    }
    let d = target - n_frames;
    let before = d.div_ceil(2) as isize;
    (0..target as isize).map(|j| (j - before).rem_euclid(n_frames as isize) as usize).collect()
}

pub fn pad_repeat(spec: &MelSpectrogram, target_frames: usize) -> MelSpectrogram {
    if spec.n_frames() >= target_frames {
        return spec.clone();
    }
    let src = pad_repeat_sources(spec.n_frames(), target_frames);
    let n = spec.n_frames();
    let mut values = Vec::with_capacity(spec.n_mels() * target_frames);
    for row in spec.values().chunks_exact(n) {
        values.extend(src.iter().map(|&s| row[s]));
    }
    MelSpectrogram::new(spec.n_mels(), target_frames, values).expect("shape computed above")
}

/// Start frames of half-overlapping windows; the last window is right-aligned to the tail.
pub fn window_offsets(n_frames: usize, window_len: usize) -> Vec<usize> {
    if n_frames <= window_len {
        return vec![0];
    }
    let stride = (window_len / 2).max(1);
    let last = n_frames - window_len;
    let mut offs: Vec<usize> = (0..=last).step_by(stride).collect();
    if *offs.last().unwrap() != last {
        offs.push(last);
    }
    offs
}

pub fn extract_windows(spec: &MelSpectrogram, window_len: usize) -> Vec<MelSpectrogram> {
    assert!(window_len >= 1);
    if spec.n_frames() < window_len {
        return vec![pad_repeat(spec, window_len)];
    }
    window_offsets(spec.n_frames(), window_len)
        .into_iter()
        .map(|o| spec.slice_frames(o, window_len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n_frames: usize) -> MelSpectrogram {
        let vals = (0..2 * n_frames).map(|i| i as f64).collect();
        MelSpectrogram::new(2, n_frames, vals).unwrap()
    }

    #[test]
    fn pad_identity_when_long_enough() {
        let s = ramp(116);
        assert_eq!(pad_repeat(&s, 116), s);
        assert_eq!(pad_repeat(&s, 50), s);
    }

    #[test]
    fn even_remainder_splits_equally() {
        let s = ramp(100);
        let p = pad_repeat(&s, 116);
        assert_eq!(p.n_frames(), 116);
        for f in 0..100 {
            assert_eq!(p.get(0, f + 8), s.get(0, f));
        }
        assert_eq!(p.get(1, 0), s.get(1, 92));
        assert_eq!(p.get(1, 115), s.get(1, 7));
    }

    #[test]
    fn short_input_sits_in_the_middle() {
        let s = ramp(5);
        let p = pad_repeat(&s, 116);
        for f in 0..5 {
            assert_eq!(p.get(0, 56 + f), s.get(0, f));
        }
    }

    #[test]
    fn window_offsets_enumerate_half_overlap() {
        assert_eq!(window_offsets(116, 116), vec![0]);
        assert_eq!(window_offsets(232, 116), vec![0, 58, 116]);
        assert_eq!(window_offsets(200, 116), vec![0, 58, 84]);
        let w = extract_windows(&ramp(50), 116);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].n_frames(), 116);
        assert!(extract_windows(&ramp(232), 116).iter().all(|w| w.n_frames() == 116));
    }
}

use std::sync::atomic::{AtomicUsize, Ordering};

use super::Samples;

/// Wraps a sample source and counts every access to a guarded index, e.g.
/// to prove that a search never looked at the test split.
pub struct AccessMonitor<'a, S: Samples + ?Sized> {
    inner: &'a S,
    guarded: Vec<bool>,
    hits: AtomicUsize,
}

impl<'a, S: Samples + ?Sized> AccessMonitor<'a, S> {
    pub fn new(inner: &'a S, guarded: &[usize]) -> Self {
        let mut mask = vec![false; inner.len()];
        for &i in guarded {
            mask[i] = true;
        }
        Self {
            inner,
            guarded: mask,
            hits: AtomicUsize::new(0),
        }
    }

    /// Number of image or label reads of guarded indices so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    fn note(&self, i: usize) {
        if self.guarded[i] {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
    }
}

impl<S: Samples + ?Sized> Samples for AccessMonitor<'_, S> {
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn image(&self, i: usize) -> &[f32] {
        self.note(i);
        self.inner.image(i)
    }

    fn label(&self, i: usize) -> usize {
        self.note(i);
        self.inner.label(i)
    }
}

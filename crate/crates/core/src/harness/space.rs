/// Tracks the current and peak word count reported by a learner.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpaceAccountant {
    current: usize,
    peak: usize,
    samples: u64,
}

impl SpaceAccountant {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, words: usize) {
        self.current = words;
        self.peak = self.peak.max(words);
        self.samples += 1;
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }
}

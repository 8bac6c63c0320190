/// Ordered observation list with running incumbent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    argmax: Option<usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Self {
        let mut d = Self::new();
        for (x, y) in points {
            d.push(x, y);
        }
        d
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) {
        let improves = match self.argmax {
            None => true,
            Some(i) => y > self.ys[i],
        };
        if improves {
            self.argmax = Some(self.ys.len());
        }
        self.xs.push(x);
        self.ys.push(y);
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Best observed value; `None` for an empty dataset.
    pub fn y_max(&self) -> Option<f64> {
        self.argmax.map(|i| self.ys[i])
    }

    /// Index of the first maximizing observation.
    pub fn argmax_index(&self) -> Option<usize> {
        self.argmax
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.xs.iter().map(Vec::as_slice).zip(self.ys.iter().copied())
    }

    pub fn filter(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Dataset {
        Dataset::from_points(self.iter().filter(|(x, _)| keep(x)).map(|(x, y)| (x.to_vec(), y)))
    }
}

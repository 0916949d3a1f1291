//! Empirical measures stored as uniformly weighted particle lists.

use super::ModelError;

/// Empirical measure on `R^d x R^d`; each particle is a (state, action) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionCloud {
    dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
}

/// Empirical measure on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateCloud {
    dim: usize,
    points: Vec<f64>,
}

/// Borrowed view of a state-action cloud, optionally with one particle removed.
///
/// `m^{N,-i}_{x,a}` is `CloudView::excluding(x, a, i)`; no copy is made.
#[derive(Clone, Copy, Debug)]
pub struct CloudView<'a> {
    dim: usize,
    states: &'a [f64],
    actions: &'a [f64],
    skip: Option<usize>,
}

/// Borrowed view of a state cloud, optionally with one particle removed.
#[derive(Clone, Copy, Debug)]
pub struct StateView<'a> {
    dim: usize,
    points: &'a [f64],
    skip: Option<usize>,
}

fn check_entries(dim: usize, data: &[f64]) -> Result<usize, ModelError> {
    if dim == 0 {
        return Err(ModelError::InvalidCloud(
            "dimension must be positive".into(),
        ));
    }
    if data.len() % dim != 0 {
        return Err(ModelError::InvalidCloud(format!(
            "{} coordinates do not split into points of dimension {dim}",
            data.len()
        )));
    }
    if data.is_empty() {
        return Err(ModelError::InvalidCloud("cloud is empty".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::InvalidCloud(
            "non-finite particle coordinate".into(),
        ));
    }
    Ok(data.len() / dim)
}

impl StateActionCloud {
    /// Builds a cloud from flat row-major state and action arrays.
    pub fn new(dim: usize, states: Vec<f64>, actions: Vec<f64>) -> Result<Self, ModelError> {
        let n = check_entries(dim, &states)?;
        let m = check_entries(dim, &actions)?;
        if n != m {
            return Err(ModelError::InvalidCloud(format!(
                "{n} states but {m} actions"
            )));
        }
        Ok(Self {
            dim,
            states,
            actions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn action(&self, k: usize) -> &[f64] {
        &self.actions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn view(&self) -> CloudView<'_> {
        CloudView::new(self.dim, &self.states, &self.actions)
    }

    /// The x-marginal as a state cloud.
    pub fn state_marginal(&self) -> StateCloud {
        StateCloud {
            dim: self.dim,
            points: self.states.clone(),
        }
    }

    /// Points of `R^{2d}` obtained by concatenating state and action.
    pub fn joint_points(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|k| {
                let mut p = self.state(k).to_vec();
                p.extend_from_slice(self.action(k));
                p
            })
            .collect()
    }
}

impl StateCloud {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self, ModelError> {
        check_entries(dim, &points)?;
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn view(&self) -> StateView<'_> {
        StateView::new(self.dim, &self.points)
    }
}

impl<'a> CloudView<'a> {
    pub fn new(dim: usize, states: &'a [f64], actions: &'a [f64]) -> Self {
        debug_assert_eq!(states.len(), actions.len());
        Self {
            dim,
            states,
            actions,
            skip: None,
        }
    }

    /// The view `(1/(n-1)) sum_{j != skip} delta_{(x^j, a^j)}`.
    pub fn excluding(dim: usize, states: &'a [f64], actions: &'a [f64], skip: usize) -> Self {
        debug_assert!(skip < states.len() / dim);
        Self {
            dim,
            states,
            actions,
            skip: Some(skip),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim - usize::from(self.skip.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index in the underlying storage of the `k`-th particle of the view.
    fn raw_index(&self, k: usize) -> usize {
        match self.skip {
            Some(s) if k >= s => k + 1,
            _ => k,
        }
    }

    pub fn state(&self, k: usize) -> &'a [f64] {
        let r = self.raw_index(k);
        &self.states[r * self.dim..(r + 1) * self.dim]
    }

    pub fn action(&self, k: usize) -> &'a [f64] {
        let r = self.raw_index(k);
        &self.actions[r * self.dim..(r + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [f64], &'a [f64])> + '_ {
        (0..self.len()).map(move |k| (self.state(k), self.action(k)))
    }

    pub fn mean_state(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (x, _) in self.iter() {
            for (mc, xc) in m.iter_mut().zip(x) {
                *mc += xc;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn mean_action(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (_, a) in self.iter() {
            for (mc, ac) in m.iter_mut().zip(a) {
                *mc += ac;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn to_owned_cloud(&self) -> StateActionCloud {
        let mut states = Vec::with_capacity(self.len() * self.dim);
        let mut actions = Vec::with_capacity(self.len() * self.dim);
        for (x, a) in self.iter() {
            states.extend_from_slice(x);
            actions.extend_from_slice(a);
        }
        StateActionCloud {
            dim: self.dim,
            states,
            actions,
        }
    }
}

impl<'a> StateView<'a> {
    pub fn new(dim: usize, points: &'a [f64]) -> Self {
        Self {
            dim,
            points,
            skip: None,
        }
    }

    pub fn excluding(dim: usize, points: &'a [f64], skip: usize) -> Self {
        debug_assert!(skip < points.len() / dim);
        Self {
            dim,
            points,
            skip: Some(skip),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim - usize::from(self.skip.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, k: usize) -> &'a [f64] {
        let r = match self.skip {
            Some(s) if k >= s => k + 1,
            _ => k,
        };
        &self.points[r * self.dim..(r + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for x in self.iter() {
            for (mc, xc) in m.iter_mut().zip(x) {
                *mc += xc;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn to_owned_cloud(&self) -> StateCloud {
        let mut points = Vec::with_capacity(self.len() * self.dim);
        for x in self.iter() {
            points.extend_from_slice(x);
        }
        StateCloud {
            dim: self.dim,
            points,
        }
    }
}

/// Moment order accepted by [`moment`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentOrder {
    First,
    Second,
}

/// Either kind of cloud, for the moment computation.
pub enum AnyCloud<'a> {
    States(StateView<'a>),
    StatesActions(CloudView<'a>),
}

impl<'a> From<&'a StateCloud> for AnyCloud<'a> {
    fn from(c: &'a StateCloud) -> Self {
        AnyCloud::States(c.view())
    }
}

impl<'a> From<&'a StateActionCloud> for AnyCloud<'a> {
    fn from(c: &'a StateActionCloud) -> Self {
        AnyCloud::StatesActions(c.view())
    }
}

/// `M_1` (mean norm) or `M_2` (mean squared norm) of a cloud. For
/// state-action clouds the norm is that of the concatenated point `(x, a)`.
pub fn moment<'a>(cloud: impl Into<AnyCloud<'a>>, order: MomentOrder) -> f64 {
    let sq_norms: Vec<f64> = match cloud.into() {
        AnyCloud::States(v) => v.iter().map(|x| x.iter().map(|c| c * c).sum()).collect(),
        AnyCloud::StatesActions(v) => v
            .iter()
            .map(|(x, a)| x.iter().chain(a).map(|c| c * c).sum())
            .collect(),
    };
    let n = sq_norms.len() as f64;
    match order {
        MomentOrder::First => sq_norms.iter().map(|s| s.sqrt()).sum::<f64>() / n,
        MomentOrder::Second => sq_norms.iter().sum::<f64>() / n,
    }
}

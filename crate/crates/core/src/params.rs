use crate::tensor::ConvParams;

/// Named flat views over every trainable tensor of a parameter record.
///
/// Gradient records reuse the parameter types, so `tensors()` of a gradient
/// lines up entry-for-entry with `tensors()` of the parameters it belongs to.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

impl ParamSet for ConvParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("weight".to_string(), self.weight.data()),
            ("bias".to_string(), &self.bias[..]),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("weight".to_string(), self.weight.data_mut()),
            ("bias".to_string(), &mut self.bias[..]),
        ]
    }
}

impl<T: ParamSet> ParamSet for Vec<T> {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.iter()
            .enumerate()
            .flat_map(|(i, p)| prefixed(&i.to_string(), p.tensors()))
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.iter_mut()
            .enumerate()
            .flat_map(|(i, p)| prefixed(&i.to_string(), p.tensors_mut()))
            .collect()
    }
}

pub(crate) fn prefixed<S>(prefix: &str, entries: Vec<(String, S)>) -> Vec<(String, S)> {
    entries
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

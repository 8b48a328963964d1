use ndarray::Array2;
use rand::Rng;

use super::layers::{Cache, Layer, Mode, Need};

/// Parameter gradients of a network, one flat vector per trainable tensor
/// in [`Sequential::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like(net: &Sequential) -> Self {
        Grads(
            net.params()
                .iter()
                .map(|p| vec![0.0; p.data.len()])
                .collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Grads) {
        assert_eq!(
            self.0.len(),
            other.0.len(),
            "gradient sets belong to different networks"
        );
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// A named view of one parameter or buffer tensor.
#[derive(Debug, Clone)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Activations and caches recorded by [`Sequential::forward`].
#[derive(Debug, Clone)]
pub struct Trace {
    caches: Vec<Cache>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn forward<R: Rng + ?Sized>(&self, x: &Array2<f64>, mode: Mode, rng: &mut R) -> Trace {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&h, mode, rng);
            caches.push(cache);
            h = y;
        }
        Trace { caches, output: h }
    }

    /// Backpropagates `dy` (gradient w.r.t. the output) through the trace.
    pub fn backward(
        &self,
        trace: &Trace,
        dy: Array2<f64>,
        need: Need,
    ) -> (Option<Array2<f64>>, Option<Grads>) {
        let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut g = dy;
        for (i, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate().rev() {
            let want = Need {
                input: i > 0 || need.input,
                params: need.params,
            };
            let (dx, grads) = layer.backward(cache, g, want);
            per_layer[i] = grads;
            match dx {
                Some(dx) => g = dx,
                None => {
                    debug_assert_eq!(i, 0);
                    g = Array2::zeros((0, 0));
                }
            }
        }
        let grads = need
            .params
            .then(|| Grads(per_layer.into_iter().flatten().collect()));
        (need.input.then_some(g), grads)
    }

    /// Applies batch-norm running-statistic updates recorded in a
    /// training-mode trace.
    pub fn commit(&mut self, trace: &Trace) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            layer.commit(cache);
        }
    }

    pub fn params(&self) -> Vec<TensorRef<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params()
                    .into_iter()
                    .map(move |(name, shape, data)| TensorRef {
                        name: format!("{i}.{}.{name}", l.kind()),
                        shape,
                        data,
                    })
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn buffers(&self) -> Vec<TensorRef<'_>> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.buffers()
                    .into_iter()
                    .map(move |(name, shape, data)| TensorRef {
                        name: format!("{i}.{}.{name}", l.kind()),
                        shape,
                        data,
                    })
            })
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.buffers_mut())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// Zeroes the weights and biases of the last affine layer.
    pub fn zero_last_affine(&mut self) {
        if let Some(layer) = self.layers.iter_mut().rev().find(|l| {
            matches!(
                l,
                Layer::Dense(_) | Layer::Conv(_) | Layer::ConvTranspose(_)
            )
        }) {
            for p in layer.params_mut() {
                p.fill(0.0);
            }
        }
    }
}

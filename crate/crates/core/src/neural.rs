//! Small fully connected networks with exact analytic gradients.

use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            "identity" => Activation::Identity,
            _ => return None,
        })
    }

    fn apply<T: Scalar>(self, z: &[T]) -> Vec<T> {
        match self {
            Activation::Relu => z.iter().map(|&v| v.max(T::zero())).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Identity => z.to_vec(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Pulls `upstream` (w.r.t. the activation output) back to the pre-activation.
    fn pullback<T: Scalar>(self, z: &[T], y: &[T], upstream: &[T]) -> Vec<T> {
        match self {
            Activation::Relu => z
                .iter()
                .zip(upstream)
                .map(|(&v, &u)| if v > T::zero() { u } else { T::zero() })
                .collect(),
            Activation::Sigmoid => y
                .iter()
                .zip(upstream)
                .map(|(&s, &u)| u * s * (T::one() - s))
                .collect(),
            Activation::Identity => upstream.to_vec(),
            Activation::Softmax => {
                let dot: T = y.iter().zip(upstream).map(|(&a, &b)| a * b).sum();
                y.iter().zip(upstream).map(|(&p, &u)| p * (u - dot)).collect()
            }
        }
    }
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Affine map followed by an activation. Weights are row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            activation,
        }
    }

    /// Glorot-uniform weights scaled by `gain`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let limit = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| T::lit(rng.random_range(-limit..=limit)))
            .collect();
        Self {
            weights,
            ..Self::zeros(inputs, outputs, activation)
        }
    }

    fn affine(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + b)
            .collect()
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, &g)| *a += scale * g);
            b.iter_mut().zip(ob).for_each(|(a, &g)| *a += scale * g);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|g| g.is_zero())
    }
}

/// Per-layer intermediate values from one forward pass.
struct Trace<T> {
    // inputs[i] feeds layer i; inputs[len] is the network output
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> DenseNet<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::InvalidArgument(format!("layer {i} has inconsistent parameter sizes")));
            }
            if l.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::InvalidArgument("softmax is only allowed on the last layer".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialised multilayer perceptron: `widths[0]` inputs, one
    /// layer per following width, `hidden` between layers and `output` last.
    /// The last layer's weights are multiplied by `output_gain`.
    pub fn mlp<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                let act = if last { output } else { hidden };
                let gain = if last { output_gain } else { 1.0 };
                Layer::random(widths[i], widths[i + 1], act, gain, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() == self.input_width() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.input_width(),
                actual: x.len(),
            })
        }
    }

    fn trace(&self, x: &[T]) -> Trace<T> {
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        for l in &self.layers {
            let z = l.affine(inputs.last().unwrap());
            inputs.push(l.activation.apply(&z));
            pre.push(z);
        }
        Trace { inputs, pre }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        Ok(self.trace(x).inputs.pop().unwrap())
    }

    /// Output of the final affine map, before the final activation.
    pub fn logits(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        Ok(self.trace(x).pre.pop().unwrap())
    }

    /// Gradients of `upstream · forward(x)` w.r.t. every parameter and `x`.
    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        self.backprop(x, upstream, false)
    }

    /// Like [`DenseNet::backward`] but `upstream` is taken w.r.t. the logits,
    /// skipping the final activation.
    pub fn backward_from_logits(&self, x: &[T], upstream: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        self.backprop(x, upstream, true)
    }

    fn backprop(&self, x: &[T], upstream: &[T], from_logits: bool) -> Result<(Gradients<T>, Vec<T>)> {
        self.check_input(x)?;
        if upstream.len() != self.output_width() {
            return Err(Error::Shape {
                expected: self.output_width(),
                actual: upstream.len(),
            });
        }
        let trace = self.trace(x);
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            if !(from_logits && i + 1 == self.layers.len()) {
                delta = l.activation.pullback(&trace.pre[i], &trace.inputs[i + 1], &delta);
            }
            let input = &trace.inputs[i];
            let (gw, gb) = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] = d;
                let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                row.iter_mut().zip(input).for_each(|(g, &v)| *g = d * v);
            }
            let mut next = vec![T::zero(); l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                next.iter_mut().zip(row).for_each(|(n, &w)| *n += w * d);
            }
            delta = next;
        }
        Ok((grads, delta))
    }

    /// `params += step * grads`.
    pub fn apply(&mut self, grads: &Gradients<T>, step: T) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.iter_mut().zip(gw).for_each(|(w, &g)| *w += step * g);
            l.bias.iter_mut().zip(gb).for_each(|(b, &g)| *b += step * g);
        }
    }

    pub fn params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape {
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// Text checkpoint: per layer a header `layer,<inputs>,<outputs>,<activation>`
    /// followed by one comma-separated weight line and one bias line.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for l in &self.layers {
            writeln!(w, "layer,{},{},{}", l.inputs, l.outputs, l.activation.name())?;
            writeln!(w, "{}", join(&l.weights))?;
            writeln!(w, "{}", join(&l.bias))?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let mut layers = Vec::new();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(Error::Parse { line: i + 1, message: e.to_string() }),
                None => Err(Error::Parse { line: 0, message: format!("checkpoint truncated before {what}") }),
            }
        };
        loop {
            let (line, header) = match next("header") {
                Ok(h) => h,
                Err(Error::Parse { line: 0, .. }) => break,
                Err(e) => return Err(e),
            };
            if header.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line, message };
            let parts: Vec<&str> = header.split(',').collect();
            if parts.len() != 4 || parts[0] != "layer" {
                return Err(bad(format!("expected layer header, got {header:?}")));
            }
            let inputs: usize = parts[1].parse().map_err(|_| bad("bad input width".into()))?;
            let outputs: usize = parts[2].parse().map_err(|_| bad("bad output width".into()))?;
            let activation = Activation::parse(parts[3]).ok_or_else(|| bad(format!("unknown activation {}", parts[3])))?;
            let (wl, weights) = next("weights")?;
            let (bl, bias) = next("bias")?;
            let weights = parse_row::<T>(&weights, wl)?;
            let bias = parse_row::<T>(&bias, bl)?;
            layers.push(Layer { inputs, outputs, weights, bias, activation });
        }
        Self::new(layers)
    }
}

fn join<T: Scalar>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_row<T: Scalar>(line: &str, line_no: usize) -> Result<Vec<T>> {
    if line.trim().is_empty() {
        return Ok(Vec::new());
    }
    line.split(',')
        .map(|s| {
            s.trim().parse::<T>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a number: {s:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn identity_net_passes_input_through() {
        let mut l = Layer::<f64>::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            l.weights[i * 3 + i] = 1.0;
        }
        let net = DenseNet::new(vec![l]).unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn zero_softmax_layer_is_uniform() {
        let net = DenseNet::new(vec![Layer::<f64>::zeros(4, 5, Activation::Softmax)]).unwrap();
        let y = net.forward(&[0.3, -1.0, 2.0, 9.0]).unwrap();
        assert!(y.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let mut rng = seeded(4);
        let net = DenseNet::<f64>::mlp(&[3, 2], Activation::Identity, Activation::Identity, 1.0, &mut rng).unwrap();
        let x = [0.5, -1.0, 2.0];
        let u = [3.0, -0.5];
        let (g, gx) = net.backward(&x, &u).unwrap();
        let (gw, gb) = &g.layers[0];
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(gw[o * 3 + i], u[o] * x[i]);
            }
        }
        assert_eq!(gb, &u.to_vec());
        let w = &net.layers()[0].weights;
        for i in 0..3 {
            assert!((gx[i] - (w[i] * u[0] + w[3 + i] * u[1])).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(5);
        let net = DenseNet::<f64>::mlp(&[4, 6, 3], Activation::Relu, Activation::Softmax, 1.0, &mut rng).unwrap();
        let (g, gx) = net.backward(&[1.0, 2.0, -1.0, 0.5], &[0.0; 3]).unwrap();
        assert!(g.is_zero());
        assert!(gx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let net = DenseNet::new(vec![Layer::<f64>::zeros(2, 1, Activation::Sigmoid)]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 2, actual: 1 })));
        assert!(net.backward(&[1.0, 2.0], &[1.0, 1.0]).is_err());
        let bad = DenseNet::new(vec![
            Layer::<f64>::zeros(2, 3, Activation::Relu),
            Layer::<f64>::zeros(4, 1, Activation::Identity),
        ]);
        assert!(bad.is_err());
        let early_softmax = DenseNet::new(vec![
            Layer::<f64>::zeros(2, 3, Activation::Softmax),
            Layer::<f64>::zeros(3, 1, Activation::Identity),
        ]);
        assert!(early_softmax.is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = seeded(6);
        let net = DenseNet::<f64>::mlp(&[5, 7, 3], Activation::Relu, Activation::Softmax, 1.0, &mut rng).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = DenseNet::<f64>::read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn works_in_single_precision() {
        let mut rng = seeded(8);
        let net = DenseNet::<f32>::mlp(&[3, 4, 2], Activation::Relu, Activation::Softmax, 1.0, &mut rng).unwrap();
        let y = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!((y.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}

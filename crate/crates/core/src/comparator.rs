//! Source-side semantic comparator: scores path embeddings in (0, 1) and is
//! trained to tell expert paths from generated ones.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{Activation, DenseNet, Gradients, Layer};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct ComparatorModel<T> {
    pub net: DenseNet<T>,
}

impl<T: Scalar> ComparatorModel<T> {
    /// `dense(hidden) → relu → dense(1) → sigmoid` over `dim`-wide embeddings.
    pub fn new<R: Rng + ?Sized>(dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let net = DenseNet::mlp(&[dim, hidden, 1], Activation::Relu, Activation::Sigmoid, 1.0, rng)?;
        Ok(Self { net })
    }

    /// All-zero parameters: the uninformative comparator, constant 0.5.
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        let net = DenseNet::new(vec![
            Layer::zeros(dim, hidden, Activation::Relu),
            Layer::zeros(hidden, 1, Activation::Sigmoid),
        ])
        .expect("consistent shapes");
        Self { net }
    }

    pub fn from_net(net: DenseNet<T>) -> Result<Self> {
        if net.output_width() != 1 || net.layers().last().map(|l| l.activation) != Some(Activation::Sigmoid) {
            return Err(Error::InvalidArgument("comparator needs a single sigmoid output".into()));
        }
        Ok(Self { net })
    }

    pub fn dim(&self) -> usize {
        self.net.input_width()
    }

    pub fn logit(&self, p: &[T]) -> Result<T> {
        Ok(self.net.logits(p)?[0])
    }

    /// Extracted semantic feature of a path embedding.
    pub fn feature(&self, p: &[T]) -> Result<T> {
        Ok(sigmoid(self.logit(p)?))
    }

    /// `log feature(p)`, computed without forming the sigmoid.
    pub fn log_feature(&self, p: &[T]) -> Result<T> {
        Ok(-softplus(-self.logit(p)?))
    }

    /// Signed feature difference `feature(expert) − feature(generated)`.
    pub fn semantic_distance(&self, expert: &[T], generated: &[T]) -> Result<T> {
        Ok(self.feature(expert)? - self.feature(generated)?)
    }

    /// `−(mean log D(pᴱ) + mean log(1 − D(pᴰ)))`.
    pub fn loss(&self, expert: &[Vec<T>], generated: &[Vec<T>]) -> Result<T> {
        self.loss_and_gradient(expert, generated, false).map(|(l, _)| l)
    }

    /// Loss and its gradient w.r.t. the comparator parameters.
    pub fn loss_gradient(&self, expert: &[Vec<T>], generated: &[Vec<T>]) -> Result<(T, Gradients<T>)> {
        self.loss_and_gradient(expert, generated, true)
    }

    fn loss_and_gradient(&self, expert: &[Vec<T>], generated: &[Vec<T>], with_grad: bool) -> Result<(T, Gradients<T>)> {
        if expert.is_empty() || generated.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut grads = Gradients::zeros_like(&self.net);
        let mut loss = T::zero();
        let ne = T::lit(expert.len() as f64);
        let ng = T::lit(generated.len() as f64);
        // −log σ(z) = softplus(−z), d/dz = σ(z) − 1 ; −log(1 − σ(z)) = softplus(z), d/dz = σ(z)
        for p in expert {
            let z = self.logit(p)?;
            loss += softplus(-z) / ne;
            if with_grad {
                let (g, _) = self.net.backward_from_logits(p, &[(sigmoid(z) - T::one()) / ne])?;
                grads.add_scaled(&g, T::one());
            }
        }
        for p in generated {
            let z = self.logit(p)?;
            loss += softplus(z) / ng;
            if with_grad {
                let (g, _) = self.net.backward_from_logits(p, &[sigmoid(z) / ng])?;
                grads.add_scaled(&g, T::one());
            }
        }
        Ok((loss, grads))
    }

    /// One SGD step on [`ComparatorModel::loss`]; returns the updated model.
    pub fn step(&self, expert: &[Vec<T>], generated: &[Vec<T>], lr: T) -> Result<Self> {
        let (_, grads) = self.loss_gradient(expert, generated)?;
        let mut next = self.clone();
        next.net.apply(&grads, -lr);
        Ok(next)
    }
}

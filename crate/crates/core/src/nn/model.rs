//! Actor-critic network: shared convolutional height-map encoder feeding
//! separate actor and critic trunks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{tanh_backward, tanh_inplace, Conv2d, Dense};
use super::Scalar;
use crate::env::{MAP_LEN, OBS_DIM};
use crate::error::{Error, Result};
use crate::vehicle::ACTION_DIM;

pub const MAP_ROWS: usize = 30;
pub const MAP_COLS: usize = 20;
/// Non-map observation components appended to the encoder output.
pub const PROPRIO_DIM: usize = OBS_DIM - MAP_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub encoder_units: usize,
    pub hidden_units: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            conv1_filters: 16,
            conv2_filters: 32,
            encoder_units: 64,
            hidden_units: 128,
        }
    }
}

impl Architecture {
    /// Narrow variant for quick desk-scale runs.
    pub fn reduced() -> Self {
        Self {
            conv1_filters: 4,
            conv2_filters: 8,
            encoder_units: 32,
            hidden_units: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.conv1_filters, self.conv2_filters, self.encoder_units, self.hidden_units].contains(&0) {
            return Err(Error::Config(format!("network layer widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    conv1: Conv2d,
    conv2: Conv2d,
    encoder: Dense,
    actor1: Dense,
    actor2: Dense,
    actor_out: Dense,
    log_std: usize,
    critic1: Dense,
    critic2: Dense,
    critic_out: Dense,
    total: usize,
}

impl Layout {
    fn new(a: &Architecture) -> Self {
        let conv1 = Conv2d::new(1, a.conv1_filters, MAP_ROWS, MAP_COLS, 0);
        let conv2 = Conv2d::new(a.conv1_filters, a.conv2_filters, conv1.out_height(), conv1.out_width(), conv1.end());
        let encoder = Dense::new(conv2.output_len(), a.encoder_units, conv2.end());
        let trunk_in = a.encoder_units + PROPRIO_DIM;
        let actor1 = Dense::new(trunk_in, a.hidden_units, encoder.end());
        let actor2 = Dense::new(a.hidden_units, a.hidden_units, actor1.end());
        let actor_out = Dense::new(a.hidden_units, ACTION_DIM, actor2.end());
        let log_std = actor_out.end();
        let critic1 = Dense::new(trunk_in, a.hidden_units, log_std + ACTION_DIM);
        let critic2 = Dense::new(a.hidden_units, a.hidden_units, critic1.end());
        let critic_out = Dense::new(a.hidden_units, 1, critic2.end());
        Self {
            conv1,
            conv2,
            encoder,
            actor1,
            actor2,
            actor_out,
            log_std,
            critic1,
            critic2,
            critic_out,
            total: critic_out.end(),
        }
    }

    fn actor_range(&self) -> std::ops::Range<usize> {
        self.actor1.offset..self.log_std + ACTION_DIM
    }

    fn critic_range(&self) -> std::ops::Range<usize> {
        self.critic1.offset..self.total
    }
}

/// Which parameter group a flat index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Encoder,
    Actor,
    Critic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output<T> {
    /// Batch×14 action means in (−1, 1).
    pub mu: Vec<T>,
    pub value: Vec<T>,
}

#[derive(Debug, Clone)]
struct Tape<T> {
    batch: usize,
    map: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
    z: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    mu: Vec<T>,
    g1: Vec<T>,
    g2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ActorCritic<T> {
    arch: Architecture,
    layout: Layout,
    params: Vec<T>,
    grads: Vec<T>,
    tape: Option<Tape<T>>,
}

fn orthogonal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gain: f64) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let v = if rows >= cols { q[(i, j)] } else { q[(j, i)] };
            out.push(gain * v);
        }
    }
    out
}

impl<T: Scalar> ActorCritic<T> {
    /// Seeded initialisation: orthogonal dense weights, fan-in uniform
    /// convolutions, zero biases, log σ = 0.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = net.layout;
        for conv in [l.conv1, l.conv2] {
            let fan_in = (super::layers::KERNEL * super::layers::KERNEL * conv.in_channels) as f64;
            let bound = 1.0 / fan_in.sqrt();
            let n = conv.param_count() - conv.out_channels;
            for p in &mut net.params[conv.offset..conv.offset + n] {
                *p = T::cast(rng.random_range(-bound..bound));
            }
        }
        let dense = [
            (l.encoder, 1.0),
            (l.actor1, 1.0),
            (l.actor2, 1.0),
            (l.actor_out, 0.01),
            (l.critic1, 1.0),
            (l.critic2, 1.0),
            (l.critic_out, 1.0),
        ];
        for (d, gain) in dense {
            let w = orthogonal(&mut rng, d.inputs, d.outputs, gain);
            for (p, v) in net.params[d.offset..].iter_mut().zip(w) {
                *p = T::cast(v);
            }
        }
        log::info!("actor-critic network with {} parameters", net.param_count());
        Ok(net)
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        Ok(Self {
            arch,
            layout,
            params: vec![T::zero(); layout.total],
            grads: vec![T::zero(); layout.total],
            tape: None,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn grads(&self) -> &[T] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [T] {
        &mut self.grads
    }

    /// Parameters and their gradients, borrowed together for an optimiser step.
    pub fn params_and_grads(&mut self) -> (&mut [T], &[T]) {
        (&mut self.params, &self.grads)
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn log_std(&self) -> &[T] {
        &self.params[self.layout.log_std..self.layout.log_std + ACTION_DIM]
    }

    pub fn log_std_grad_mut(&mut self) -> &mut [T] {
        &mut self.grads[self.layout.log_std..self.layout.log_std + ACTION_DIM]
    }

    pub fn group_of(&self, index: usize) -> ParamGroup {
        if self.layout.actor_range().contains(&index) {
            ParamGroup::Actor
        } else if self.layout.critic_range().contains(&index) {
            ParamGroup::Critic
        } else {
            ParamGroup::Encoder
        }
    }

    /// Copy of the parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> ActorCritic<U> {
        ActorCritic {
            arch: self.arch,
            layout: self.layout,
            params: self.params.iter().map(|p| U::cast(p.f64())).collect(),
            grads: vec![U::zero(); self.layout.total],
            tape: None,
        }
    }

    fn run(&self, obs: &[T], batch: usize) -> Result<Tape<T>> {
        if obs.len() != batch * OBS_DIM {
            return Err(Error::Shape(format!(
                "expected {batch}×{OBS_DIM} observation values, got {}",
                obs.len()
            )));
        }
        let l = &self.layout;
        let p = &self.params;
        let mut map = Vec::with_capacity(batch * MAP_LEN);
        let mut z = Vec::with_capacity(batch * l.actor1.inputs);
        for row in obs.chunks_exact(OBS_DIM) {
            map.extend_from_slice(&row[..MAP_LEN]);
        }
        let mut a1 = l.conv1.forward(p, &map, batch);
        tanh_inplace(&mut a1);
        let mut a2 = l.conv2.forward(p, &a1, batch);
        tanh_inplace(&mut a2);
        let mut e = l.encoder.forward(p, &a2, batch);
        tanh_inplace(&mut e);
        for (er, row) in e.chunks_exact(l.encoder.outputs).zip(obs.chunks_exact(OBS_DIM)) {
            z.extend_from_slice(er);
            z.extend_from_slice(&row[MAP_LEN..]);
        }
        let hidden = |d: &Dense, x: &[T]| {
            let mut y = d.forward(p, x, batch);
            tanh_inplace(&mut y);
            y
        };
        let h1 = hidden(&l.actor1, &z);
        let h2 = hidden(&l.actor2, &h1);
        let mu = hidden(&l.actor_out, &h2);
        let g1 = hidden(&l.critic1, &z);
        let g2 = hidden(&l.critic2, &g1);
        Ok(Tape {
            batch,
            map,
            a1,
            a2,
            z,
            h1,
            h2,
            mu,
            g1,
            g2,
        })
    }

    fn value_head(&self, tape: &Tape<T>) -> Vec<T> {
        self.layout.critic_out.forward(&self.params, &tape.g2, tape.batch)
    }

    /// Inference pass; nothing is recorded for differentiation.
    pub fn forward(&self, obs: &[T], batch: usize) -> Result<Output<T>> {
        let tape = self.run(obs, batch)?;
        let value = self.value_head(&tape);
        Ok(Output { mu: tape.mu, value })
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward_train(&mut self, obs: &[T], batch: usize) -> Result<Output<T>> {
        let tape = self.run(obs, batch)?;
        let out = Output {
            mu: tape.mu.clone(),
            value: self.value_head(&tape),
        };
        self.tape = Some(tape);
        Ok(out)
    }

    /// Back-propagates the loss gradients w.r.t. the means (batch×14) and
    /// values (batch) of the last `forward_train`, accumulating into the
    /// parameter gradients.
    pub fn backward(&mut self, d_mu: &[T], d_value: &[T]) -> Result<()> {
        let t = self
            .tape
            .take()
            .ok_or_else(|| Error::Protocol("backward called without a recorded forward pass".into()))?;
        let b = t.batch;
        if d_mu.len() != b * ACTION_DIM || d_value.len() != b {
            return Err(Error::Shape(format!(
                "gradient shapes {}/{} do not match batch {b}",
                d_mu.len(),
                d_value.len()
            )));
        }
        let l = self.layout;
        let (p, g) = (&self.params, &mut self.grads);

        let mut dy = d_mu.to_vec();
        tanh_backward(&t.mu, &mut dy);
        let mut dh2 = l.actor_out.backward(p, g, &t.h2, &dy, b, true).unwrap();
        tanh_backward(&t.h2, &mut dh2);
        let mut dh1 = l.actor2.backward(p, g, &t.h1, &dh2, b, true).unwrap();
        tanh_backward(&t.h1, &mut dh1);
        let mut dz = l.actor1.backward(p, g, &t.z, &dh1, b, true).unwrap();

        let mut dg2 = l.critic_out.backward(p, g, &t.g2, d_value, b, true).unwrap();
        tanh_backward(&t.g2, &mut dg2);
        let mut dg1 = l.critic2.backward(p, g, &t.g1, &dg2, b, true).unwrap();
        tanh_backward(&t.g1, &mut dg1);
        let dzc = l.critic1.backward(p, g, &t.z, &dg1, b, true).unwrap();
        for (a, c) in dz.iter_mut().zip(&dzc) {
            *a += *c;
        }

        let enc = l.encoder.outputs;
        let mut de = Vec::with_capacity(b * enc);
        let mut e = Vec::with_capacity(b * enc);
        for (drow, zrow) in dz.chunks_exact(l.actor1.inputs).zip(t.z.chunks_exact(l.actor1.inputs)) {
            de.extend_from_slice(&drow[..enc]);
            e.extend_from_slice(&zrow[..enc]);
        }
        tanh_backward(&e, &mut de);
        let mut da2 = l.encoder.backward(p, g, &t.a2, &de, b, true).unwrap();
        tanh_backward(&t.a2, &mut da2);
        let mut da1 = l.conv2.backward(p, g, &t.a1, &da2, b, true).unwrap();
        tanh_backward(&t.a1, &mut da1);
        l.conv1.backward(p, g, &t.map, &da1, b, false);
        Ok(())
    }
}

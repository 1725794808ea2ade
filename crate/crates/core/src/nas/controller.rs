//! One-layer LSTM policy over hop widths, with hand-written backpropagation
//! through time for the log-probability of an action sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, softmax_in_place};
use crate::model::{Adam, AdamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub hidden: usize,
    pub embedding: usize,
    pub learning_rate: f64,
    /// LSTM and embedding weights start uniform in `±init_range`.
    pub init_range: f64,
    pub baseline_decay: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            hidden: 100,
            embedding: 100,
            learning_rate: 3.5e-4,
            init_range: 0.1,
            baseline_decay: 0.9,
        }
    }
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Layout {
    values: usize,
    hidden: usize,
    embed: usize,
    steps: usize,
    /// `(values + 1) × embed`; row 0 is the start token, row `a + 1` is action `a`.
    emb: usize,
    /// `4·hidden × embed`, gate order input, forget, cell, output.
    w_x: usize,
    w_h: usize,
    bias: usize,
    /// Per step: `values × hidden` projection followed by `values` biases.
    decoders: usize,
    total: usize,
}

impl Layout {
    fn new(values: usize, hidden: usize, embed: usize, steps: usize) -> Self {
        let emb = 0;
        let w_x = emb + (values + 1) * embed;
        let w_h = w_x + 4 * hidden * embed;
        let bias = w_h + 4 * hidden * hidden;
        let decoders = bias + 4 * hidden;
        let total = decoders + steps * (values * hidden + values);
        Layout {
            values,
            hidden,
            embed,
            steps,
            emb,
            w_x,
            w_h,
            bias,
            decoders,
            total,
        }
    }

    fn decoder(&self, step: usize) -> (usize, usize) {
        let w = self.decoders + step * (self.values * self.hidden + self.values);
        (w, w + self.values * self.hidden)
    }
}

/// Actions drawn by the controller. Steps before `from_step` were forced.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub actions: Vec<usize>,
    /// `Σ log p(a_t)` over the sampled steps.
    pub log_prob: f64,
    pub from_step: usize,
}

struct StepCache {
    input: usize,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Controller {
    config: ControllerConfig,
    layout: Layout,
    params: Vec<f64>,
    adam: Adam,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Controller {
    /// The output projections start at zero so the initial policy is exactly uniform.
    pub fn new(num_values: usize, max_steps: usize, config: ControllerConfig, seed: u64) -> Result<Self> {
        if num_values == 0 || max_steps == 0 {
            return Err(Error::input("controller needs at least one action and one step"));
        }
        if config.hidden == 0 || config.embedding == 0 {
            return Err(Error::input("controller sizes must be positive"));
        }
        if !(config.learning_rate > 0.0) || !(0.0..1.0).contains(&config.baseline_decay) {
            return Err(Error::input("controller learning rate or baseline decay out of range"));
        }
        let layout = Layout::new(num_values, config.hidden, config.embedding, max_steps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = config.init_range;
        let mut params = vec![0.0; layout.total];
        for p in &mut params[..layout.decoders] {
            *p = if r > 0.0 { rng.random_range(-r..r) } else { 0.0 };
        }
        let adam = Adam::new(AdamConfig::with_lr(config.learning_rate), &[layout.total]);
        Ok(Controller {
            config,
            layout,
            params,
            adam,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn num_values(&self) -> usize {
        self.layout.values
    }

    pub fn max_steps(&self) -> usize {
        self.layout.steps
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Overwrites the output bias of `step`; handy for forcing a policy in tests.
    pub fn set_output_bias(&mut self, step: usize, bias: &[f64]) {
        let (_, b) = self.layout.decoder(step);
        self.params[b..b + self.layout.values].copy_from_slice(bias);
    }

    fn step(&self, t: usize, input: usize, h_prev: Vec<f64>, c_prev: Vec<f64>) -> StepCache {
        let Layout { hidden: h, embed: e, .. } = self.layout;
        let p = &self.params;
        let x = &p[self.layout.emb + input * e..self.layout.emb + (input + 1) * e];
        let mut gates = vec![0.0; 4 * h];
        for (r, z) in gates.iter_mut().enumerate() {
            let wx = &p[self.layout.w_x + r * e..self.layout.w_x + (r + 1) * e];
            let wh = &p[self.layout.w_h + r * h..self.layout.w_h + (r + 1) * h];
            let pre = dot(wx, x) + dot(wh, &h_prev) + p[self.layout.bias + r];
            *z = if (2 * h..3 * h).contains(&r) { pre.tanh() } else { sigmoid(pre) };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut hs = vec![0.0; h];
        for j in 0..h {
            c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
            tanh_c[j] = c[j].tanh();
            hs[j] = gates[3 * h + j] * tanh_c[j];
        }
        let (w_o, b_o) = self.layout.decoder(t);
        let mut probs: Vec<f64> = (0..self.layout.values)
            .map(|a| dot(&p[w_o + a * h..w_o + (a + 1) * h], &hs) + p[b_o + a])
            .collect();
        softmax_in_place(&mut probs);
        StepCache {
            input,
            h_prev,
            c_prev,
            gates,
            c,
            tanh_c,
            h: hs,
            probs,
        }
    }

    fn unroll(&self, k: usize, mut choose: impl FnMut(usize, &[f64]) -> usize) -> (Vec<usize>, Vec<StepCache>) {
        let h = self.layout.hidden;
        let mut actions = Vec::with_capacity(k);
        let mut caches = Vec::with_capacity(k);
        let mut cell = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        let mut input = 0;
        for t in 0..k {
            let cache = self.step(t, input, hidden, cell);
            let a = choose(t, &cache.probs);
            hidden = cache.h.clone();
            cell = cache.c.clone();
            input = a + 1;
            actions.push(a);
            caches.push(cache);
        }
        (actions, caches)
    }

    fn check_len(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.layout.steps {
            return Err(Error::input(format!(
                "controller unrolls 1..={} steps, asked for {k}",
                self.layout.steps
            )));
        }
        Ok(())
    }

    /// Samples `k` actions, forcing the first `prefix.len()` of them.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, prefix: &[usize], rng: &mut R) -> Result<Sample> {
        self.check_len(k)?;
        if prefix.len() > k || prefix.iter().any(|&a| a >= self.layout.values) {
            return Err(Error::input("prefix longer than K or outside the action set"));
        }
        let mut log_prob = 0.0;
        let (actions, _) = self.unroll(k, |t, probs| {
            if t < prefix.len() {
                return prefix[t];
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (a, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = a;
                    break;
                }
            }
            log_prob += probs[pick].ln();
            pick
        });
        Ok(Sample {
            actions,
            log_prob,
            from_step: prefix.len(),
        })
    }

    /// Distribution of the action following `prefix`.
    pub fn next_probabilities(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.check_len(prefix.len() + 1)?;
        let mut out = Vec::new();
        self.unroll(prefix.len() + 1, |t, probs| {
            if t < prefix.len() {
                prefix[t]
            } else {
                out = probs.to_vec();
                0
            }
        });
        Ok(out)
    }

    /// `Σ_{t ≥ from_step} log p(a_t)` under teacher forcing.
    pub fn log_prob(&self, actions: &[usize], from_step: usize) -> Result<f64> {
        Ok(self.log_prob_gradient(actions, from_step, 0.0)?.0)
    }

    /// Log-probability of `actions` and `weight ·` its gradient, by backpropagation through time.
    pub fn log_prob_gradient(&self, actions: &[usize], from_step: usize, weight: f64) -> Result<(f64, Vec<f64>)> {
        let k = actions.len();
        self.check_len(k)?;
        if actions.iter().any(|&a| a >= self.layout.values) {
            return Err(Error::input("action outside the action set"));
        }
        let (_, caches) = self.unroll(k, |t, _| actions[t]);
        let log_prob: f64 = (from_step..k).map(|t| caches[t].probs[actions[t]].ln()).sum();
        let mut grad = vec![0.0; self.layout.total];
        if weight != 0.0 {
            self.backward(&caches, actions, from_step, weight, &mut grad);
        }
        Ok((log_prob, grad))
    }

    fn backward(&self, caches: &[StepCache], actions: &[usize], from_step: usize, weight: f64, grad: &mut [f64]) {
        let Layout { hidden: h, embed: e, values: v, .. } = self.layout;
        let p = &self.params;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let mut dh = dh_next.clone();
            if t >= from_step {
                let (w_o, b_o) = self.layout.decoder(t);
                for a in 0..v {
                    let target = if a == actions[t] { 1.0 } else { 0.0 };
                    let dlogit = weight * (target - cache.probs[a]);
                    grad[b_o + a] += dlogit;
                    for j in 0..h {
                        grad[w_o + a * h + j] += dlogit * cache.h[j];
                        dh[j] += dlogit * p[w_o + a * h + j];
                    }
                }
            }
            let g = &cache.gates;
            let mut dz = vec![0.0; 4 * h];
            for j in 0..h {
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = cache.tanh_c[j];
                let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * gg * i * (1.0 - i);
                dz[h + j] = dc * cache.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x_off = self.layout.emb + cache.input * e;
            dh_next.iter_mut().for_each(|d| *d = 0.0);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad[self.layout.bias + r] += d;
                for c in 0..e {
                    grad[self.layout.w_x + r * e + c] += d * p[x_off + c];
                    grad[x_off + c] += d * p[self.layout.w_x + r * e + c];
                }
                for c in 0..h {
                    grad[self.layout.w_h + r * h + c] += d * cache.h_prev[c];
                    dh_next[c] += d * p[self.layout.w_h + r * h + c];
                }
            }
        }
    }

    /// One Adam step up the given gradient.
    pub fn ascend(&mut self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::shape("gradient length differs from parameter count"));
        }
        let descent: Vec<f64> = grad.iter().map(|g| -g).collect();
        self.adam.step(&mut [Some(&mut self.params)], &[&descent]);
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("controller parameters became non-finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Controller {
        let cfg = ControllerConfig { hidden: 4, embedding: 3, init_range: 0.8, ..Default::default() };
        let mut c = Controller::new(3, 3, cfg, 5).unwrap();
        // Random decoders so every path of the gradient is exercised.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let start = c.layout.decoders;
        c.params_mut()[start..].iter_mut().for_each(|p| *p = rng.random_range(-0.5..0.5));
        c
    }

    #[test]
    fn initial_policy_is_uniform() {
        let c = Controller::new(5, 2, ControllerConfig::default(), 0).unwrap();
        for p in c.next_probabilities(&[]).unwrap() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_log_prob_matches_teacher_forcing() {
        let c = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let s = c.sample(3, &[], &mut rng).unwrap();
            assert!((s.log_prob - c.log_prob(&s.actions, 0).unwrap()).abs() < 1e-12);
            let forced = c.sample(3, &[2], &mut rng).unwrap();
            assert_eq!(forced.actions[0], 2);
            assert!((forced.log_prob - c.log_prob(&forced.actions, 1).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_samples() {
        let c = tiny();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| c.sample(3, &[], &mut rng).unwrap().actions).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn dominant_logit_is_always_sampled() {
        let mut c = tiny();
        c.set_output_bias(0, &[0.0, 1e3, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..500).all(|_| c.sample(1, &[], &mut rng).unwrap().actions == vec![1]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = tiny();
        let actions = [2, 0, 1];
        for from in [0, 1] {
            let (_, grad) = c.log_prob_gradient(&actions, from, 1.0).unwrap();
            let mut probe = c.clone();
            let h = 1e-6;
            for i in 0..grad.len() {
                let orig = probe.params[i];
                probe.params[i] = orig + h;
                let up = probe.log_prob(&actions, from).unwrap();
                probe.params[i] = orig - h;
                let down = probe.log_prob(&actions, from).unwrap();
                probe.params[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(err < 1e-4, "param {i}: fd {fd} analytic {}", grad[i]);
            }
        }
    }

    #[test]
    fn bad_lengths_are_rejected() {
        let c = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(c.sample(4, &[], &mut rng).is_err());
        assert!(c.sample(0, &[], &mut rng).is_err());
        assert!(c.log_prob(&[3], 0).is_err());
    }
}

//! Actor-critic losses and the per-episode optimizer step.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::adjacency::GraphSet;
use crate::error::NeuralError;
use crate::neural::{clip_grad_norm, Adam, Gradients, Tape, Var};
use crate::policy::{network, Policy, Role};

use super::gae::compute_gae;
use super::rollout::EpisodeBuffer;
use super::TrainConfig;

/// Stacked inputs plus the per-row constants of one update.
#[derive(Debug, Clone)]
pub struct LossBatch {
    pub features: Array2<f64>,
    pub graphs: GraphSet,
    pub actions: Vec<usize>,
    pub controllable: Vec<bool>,
    /// Treated as constants by the loss.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub transitions: usize,
    pub controllable: usize,
}

pub struct LossVars {
    pub total: Var,
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
}

/// Records `policy_loss + value_coeff * value_loss` on `t`, where
/// `policy_loss = −mean_c(logπ(a|s) A) − entropy_coeff · mean_c(H)` over
/// controllable rows and `value_loss = mean((V − R)²)` over all rows.
pub fn record_loss<'a>(
    t: &mut Tape<'a>,
    batch: &'a LossBatch,
    policy: &'a Policy,
    cfg: &TrainConfig,
) -> Result<LossVars, NeuralError> {
    let n = batch.features.nrows();
    let c = batch.controllable.iter().filter(|&&b| b).count().max(1) as f64;
    let x = t.input_ref(&batch.features);

    let logits = network(t, x, &batch.graphs, &policy.actor, &policy.spec, Role::Actor)?;
    let logp = t.log_softmax_rows(logits);
    let chosen = t.gather(logp, batch.actions.clone());
    let pg_weights = Array2::from_shape_fn((n, 1), |(i, _)| {
        if batch.controllable[i] {
            batch.advantages[i] / c
        } else {
            0.0
        }
    });
    let weighted = t.mul_const(chosen, pg_weights);
    let pg = t.sum(weighted);

    let p = t.exp(logp);
    let plogp = t.mul(p, logp);
    let neg_entropy_rows = t.row_sum(plogp);
    let mask = Array2::from_shape_fn((n, 1), |(i, _)| if batch.controllable[i] { 1.0 / c } else { 0.0 });
    let masked = t.mul_const(neg_entropy_rows, mask);
    let neg_entropy = t.sum(masked);
    let entropy = t.scale(neg_entropy, -1.0);

    let neg_pg = t.scale(pg, -1.0);
    let ent_term = t.scale(neg_entropy, cfg.entropy_coeff);
    let policy_loss = t.add(neg_pg, ent_term);

    let v = network(t, x, &batch.graphs, &policy.critic, &policy.spec, Role::Critic)?;
    let target = t.input(Array2::from_shape_fn((n, 1), |(i, _)| batch.returns[i]));
    let err = t.sub(v, target);
    let sq = t.square(err);
    let value_loss = t.mean(sq);

    let vterm = t.scale(value_loss, cfg.value_coeff);
    let total = t.add(policy_loss, vterm);
    Ok(LossVars {
        total,
        policy: policy_loss,
        value: value_loss,
        entropy,
    })
}

/// Critic values for every row of the stacked episode.
pub fn critic_values(policy: &Policy, features: &Array2<f64>, graphs: &GraphSet) -> Vec<f64> {
    let mut t = Tape::new();
    let x = t.input_ref(features);
    let v = network(&mut t, x, graphs, &policy.critic, &policy.spec, Role::Critic).expect("own layout");
    t.value(v).column(0).to_vec()
}

/// GAE advantages and returns per transition, using `values` as `V(s_t)`.
pub fn advantages_and_returns(buffer: &EpisodeBuffer, values: &[f64], cfg: &TrainConfig) -> (Vec<f64>, Vec<f64>) {
    let n = buffer.transitions.len();
    let mut adv = vec![0.0; n];
    for (id, idx) in buffer.trajectories() {
        let last = &buffer.transitions[*idx.last().expect("non-empty trajectory")];
        let terminal_value = if last.terminal {
            0.0
        } else {
            buffer.bootstrap.get(&id).copied().unwrap_or(0.0)
        };
        let rewards: Vec<f64> = idx.iter().map(|&i| buffer.transitions[i].shaped_reward).collect();
        let vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        let a = compute_gae(&rewards, &vals, terminal_value, cfg.gamma, cfg.lambda);
        for (&i, a) in idx.iter().zip(a) {
            adv[i] = a;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

pub fn build_batch(policy: &Policy, buffer: &EpisodeBuffer, cfg: &TrainConfig) -> LossBatch {
    let (features, graphs) = buffer.stacked();
    let values = critic_values(policy, &features, &graphs);
    let (mut advantages, returns) = advantages_and_returns(buffer, &values, cfg);
    let controllable: Vec<bool> = buffer.transitions.iter().map(|t| t.controllable).collect();
    if cfg.normalize_advantages {
        normalize_masked(&mut advantages, &controllable);
    }
    LossBatch {
        features,
        graphs,
        actions: buffer.transitions.iter().map(|t| t.action).collect(),
        controllable,
        advantages,
        returns,
    }
}

fn normalize_masked(x: &mut [f64], mask: &[bool]) {
    let sel: Vec<f64> = x.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    if sel.len() < 2 {
        return;
    }
    let mean = sel.iter().sum::<f64>() / sel.len() as f64;
    let var = sel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / sel.len() as f64;
    let sd = var.sqrt().max(1e-8);
    for (v, m) in x.iter_mut().zip(mask) {
        if *m {
            *v = (*v - mean) / sd;
        }
    }
}

pub fn loss_gradients(policy: &Policy, batch: &LossBatch, cfg: &TrainConfig) -> (Gradients, [f64; 4]) {
    let mut t = Tape::new();
    let vars = record_loss(&mut t, batch, policy, cfg).expect("own layout");
    let scalars = [vars.total, vars.policy, vars.value, vars.entropy].map(|v| t.value(v)[[0, 0]]);
    let grads = t.backward(vars.total).expect("fresh scalar tape");
    (grads, scalars)
}

/// One Adam step on each network. Returns `None` when the buffer holds no
/// controllable transition.
pub fn update(policy: &mut Policy, buffer: &EpisodeBuffer, cfg: &TrainConfig) -> Option<LossStats> {
    let controllable = buffer.controllable_count();
    if controllable == 0 {
        return None;
    }
    let batch = build_batch(policy, buffer, cfg);
    let (grads, [total, pl, vl, ent]) = loss_gradients(policy, &batch, cfg);
    let (actor_grad_norm, critic_grad_norm) = apply_gradients(policy, &grads, cfg);
    Some(LossStats {
        policy_loss: pl,
        value_loss: vl,
        entropy: ent,
        total_loss: total,
        actor_grad_norm,
        critic_grad_norm,
        transitions: buffer.transitions.len(),
        controllable,
    })
}

/// Adam step on both stores; returns the actor and critic gradient norms
/// before clipping.
pub fn apply_gradients(policy: &mut Policy, grads: &Gradients, cfg: &TrainConfig) -> (f64, f64) {
    let adam = Adam {
        lr: cfg.learning_rate,
        ..Adam::default()
    };
    policy.actor.zero_grad();
    policy.critic.zero_grad();
    policy.actor.accumulate(grads);
    policy.critic.accumulate(grads);
    let norms = match cfg.max_grad_norm {
        Some(max) => (clip_grad_norm(&mut policy.actor, max), clip_grad_norm(&mut policy.critic, max)),
        None => (policy.actor.grad_norm(), policy.critic.grad_norm()),
    };
    adam.step(&mut policy.actor);
    adam.step(&mut policy.critic);
    norms
}

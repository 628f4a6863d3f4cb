//! Plain-text checkpoints.
//!
//! Layout: a `sparse-mfc-checkpoint 1` magic line, then `key value...` header
//! lines (`k_star`, `num_states`, `num_actions`, `decision_states`,
//! `time_feature`, `horizon`, `obs_dim`, `hidden`, `action_dim`,
//! `kl_coeff`, `iteration`, `adam_steps`, `adam`), then the vector blocks
//! `theta`, `adam_m`, `adam_v` (a `name count` line followed by one value
//! per line), and finally `curve count` with one whitespace-separated
//! [`IterationStats`] row per line. `theta` is laid out as the policy
//! network (per layer: row-major `out × in` weights, then biases), the
//! log-std vector, then the value network. Floats use Rust's shortest
//! round-trip formatting, so a save/load cycle is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::nn::{Adam, MlpShape};
use super::policy::HighLevelPolicy;
use super::IterationStats;
use crate::error::{Error, Result};

const MAGIC: &str = "sparse-mfc-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub policy: HighLevelPolicy,
    pub adam: Adam,
    pub kl_coeff: f64,
    pub iteration: usize,
    pub curve: Vec<IterationStats>,
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

pub fn render_checkpoint(c: &Checkpoint) -> String {
    let p = &c.policy;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "k_star {}", p.k_star);
    let _ = writeln!(s, "num_states {}", p.num_states);
    let _ = writeln!(s, "num_actions {}", p.num_actions);
    let _ = writeln!(s, "decision_states {}", join(&p.decision_states));
    let _ = writeln!(s, "time_feature {}", u8::from(p.time_feature));
    let _ = writeln!(s, "horizon {}", p.horizon);
    let _ = writeln!(s, "obs_dim {}", p.policy_shape.input);
    let _ = writeln!(s, "hidden {}", join(&p.policy_shape.hidden));
    let _ = writeln!(s, "action_dim {}", p.policy_shape.output);
    let _ = writeln!(s, "kl_coeff {}", c.kl_coeff);
    let _ = writeln!(s, "iteration {}", c.iteration);
    let _ = writeln!(s, "adam_steps {}", c.adam.steps);
    let _ = writeln!(s, "adam {} {} {} {}", c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.eps);
    for (name, v) in [("theta", &p.theta), ("adam_m", &c.adam.m), ("adam_v", &c.adam.v)] {
        let _ = writeln!(s, "{name} {}", v.len());
        for x in v {
            let _ = writeln!(s, "{x}");
        }
    }
    let _ = writeln!(s, "curve {}", c.curve.len());
    for r in &c.curve {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            r.iteration, r.mean_return, r.std_return, r.kl, r.entropy, r.kl_coeff, r.surrogate, r.value_loss
        );
    }
    s
}

pub fn save_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    fs::write(path, render_checkpoint(c))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))
    }

    /// Reads `key v...` and returns the values.
    fn field(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let (no, line) = self.next_line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            _ => Err(Error::Checkpoint(format!("line {no}: expected `{key}`"))),
        }
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.field(key)?;
        match v.as_slice() {
            [x] => parse(x, key),
            _ => Err(Error::Checkpoint(format!("`{key}` takes one value"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        self.field(key)?.iter().map(|x| parse(x, key)).collect()
    }

    fn block(&mut self, key: &str) -> Result<Vec<f64>> {
        let n: usize = self.scalar(key)?;
        (0..n)
            .map(|_| {
                let (_, l) = self.next_line()?;
                parse(l.trim(), key)
            })
            .collect()
    }
}

fn parse<T: FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Checkpoint(format!("cannot parse `{s}` in `{key}`")))
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    let mut r = Lines {
        inner: text.lines().enumerate(),
    };
    if r.next_line()?.1.trim() != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let k_star = r.scalar("k_star")?;
    let num_states = r.scalar("num_states")?;
    let num_actions = r.scalar("num_actions")?;
    let decision_states = r.list("decision_states")?;
    let time_feature = r.scalar::<u8>("time_feature")? != 0;
    let horizon = r.scalar("horizon")?;
    let obs_dim = r.scalar("obs_dim")?;
    let hidden: Vec<usize> = r.list("hidden")?;
    let action_dim = r.scalar("action_dim")?;
    let kl_coeff = r.scalar("kl_coeff")?;
    let iteration = r.scalar("iteration")?;
    let steps = r.scalar("adam_steps")?;
    let hyper: Vec<f64> = r.list("adam")?;
    let [lr, beta1, beta2, eps] = hyper[..] else {
        return Err(Error::Checkpoint("`adam` takes four values".into()));
    };
    let theta = r.block("theta")?;
    let m = r.block("adam_m")?;
    let v = r.block("adam_v")?;
    let n_curve: usize = r.scalar("curve")?;
    let mut curve = Vec::with_capacity(n_curve);
    for _ in 0..n_curve {
        let (no, line) = r.next_line()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 {
            return Err(Error::Checkpoint(format!("line {no}: curve rows have 8 fields")));
        }
        curve.push(IterationStats {
            iteration: parse(f[0], "curve")?,
            mean_return: parse(f[1], "curve")?,
            std_return: parse(f[2], "curve")?,
            kl: parse(f[3], "curve")?,
            entropy: parse(f[4], "curve")?,
            kl_coeff: parse(f[5], "curve")?,
            surrogate: parse(f[6], "curve")?,
            value_loss: parse(f[7], "curve")?,
        });
    }

    let policy_shape = MlpShape::new(obs_dim, &hidden, action_dim);
    let value_shape = MlpShape::new(obs_dim, &hidden, 1);
    let expected = policy_shape.param_count() + action_dim + value_shape.param_count();
    if theta.len() != expected || m.len() != expected || v.len() != expected {
        return Err(Error::Checkpoint(format!(
            "parameter blocks have {}/{}/{} entries, layout needs {expected}",
            theta.len(),
            m.len(),
            v.len()
        )));
    }
    let rows = k_star + 1;
    if obs_dim != rows * num_states + usize::from(time_feature)
        || action_dim != rows * decision_states.len() * num_actions
    {
        return Err(Error::Checkpoint("network dimensions do not match the problem layout".into()));
    }
    Ok(Checkpoint {
        policy: HighLevelPolicy {
            k_star,
            num_states,
            num_actions,
            decision_states,
            time_feature,
            horizon,
            policy_shape,
            value_shape,
            theta,
        },
        adam: Adam {
            lr,
            beta1,
            beta2,
            eps,
            m,
            v,
            steps,
        },
        kl_coeff,
        iteration,
        curve,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(&fs::read_to_string(path)?)
}

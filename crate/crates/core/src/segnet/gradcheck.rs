use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{init_params, NetworkSpec, ParamSet, SegNet};
use crate::error::{Error, Result};
use crate::grid_graph::GridShape;
use crate::regularizers::{objective, ObjectiveKind, RegularizerConfig};

const PATCH: usize = 8;
const STEP: f64 = 1e-5;
/// Patches whose ReLU inputs or pooling gaps come closer than this to a kink
/// are redrawn before any differencing.
const KINK_MARGIN: f64 = 1e-4;
const MAX_DRAWS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max |numeric|` over all parameters.
    pub max_rel_error: f64,
    pub params_checked: usize,
    /// Patches drawn before one was checked on a single smooth piece.
    pub draws: usize,
}

/// Zero biases put dead regions exactly on the ReLU kink; a random bias moves
/// the check point off it.
fn random_biases(mut params: ParamSet<f64>, rng: &mut ChaCha8Rng) -> ParamSet<f64> {
    for t in params.tensors_mut() {
        if t.name.ends_with(".bias") {
            t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        }
    }
    params
}

/// Compares the end-to-end analytic gradient of an objective on a random
/// 8x8 patch against central differences over every parameter (f64). A patch
/// is redrawn when any perturbed evaluation switches a ReLU or a pooling
/// choice, since the difference quotient would then straddle a kink.
pub fn gradient_check(
    spec: &NetworkSpec,
    seed: u64,
    kind: ObjectiveKind,
    cfg: &RegularizerConfig,
) -> Result<GradCheckReport> {
    let net = SegNet::new(*spec)?;
    let shape = GridShape::new(PATCH, PATCH)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let params = random_biases(init_params(spec, seed), &mut rng);

    'draw: for draw in 1..=MAX_DRAWS {
        let image: Vec<f64> = (0..shape.len()).map(|_| rng.random()).collect();
        let mask: Vec<f64> = (0..shape.len())
            .map(|_| rng.random_bool(0.35) as u8 as f64)
            .collect();
        let cache = net.forward_sample(&params, &image, PATCH, PATCH)?;
        if cache.kink_margin() < KINK_MARGIN {
            continue;
        }
        let pattern = cache.pattern();
        let loss = objective(shape, cache.output(), &mask, kind, cfg)?;
        let grads = net.backward_sample(&params, &cache, &loss.grad)?;

        // None when the perturbed pass left the base linear piece
        let eval = |p: &ParamSet<f64>| -> Result<Option<f64>> {
            let c = net.forward_sample(p, &image, PATCH, PATCH)?;
            if c.pattern() != pattern {
                return Ok(None);
            }
            Ok(Some(objective(shape, c.output(), &mask, kind, cfg)?.value))
        };
        let mut probe = params.clone();
        let mut max_err = 0.0f64;
        let mut scale = 0.0f64;
        for (t, tensor) in grads.tensors().iter().enumerate() {
            for (k, &analytic) in tensor.data.iter().enumerate() {
                let orig = probe.tensors()[t].data[k];
                probe.tensors_mut()[t].data[k] = orig + STEP;
                let up = eval(&probe)?;
                probe.tensors_mut()[t].data[k] = orig - STEP;
                let down = eval(&probe)?;
                probe.tensors_mut()[t].data[k] = orig;
                let (Some(up), Some(down)) = (up, down) else {
                    continue 'draw;
                };
                let numeric = (up - down) / (2.0 * STEP);
                max_err = max_err.max((numeric - analytic).abs());
                scale = scale.max(numeric.abs());
            }
        }
        return Ok(GradCheckReport {
            max_rel_error: max_err / scale.max(f64::MIN_POSITIVE),
            params_checked: params.len(),
            draws: draw,
        });
    }
    Err(Error::InvalidInput(format!(
        "no patch stayed on one smooth piece after {MAX_DRAWS} draws"
    )))
}

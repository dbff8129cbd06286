//! Range-gated broadcast channel with independent Bernoulli frame loss.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::comms::{Envelope, Pose};

#[derive(Debug, Clone)]
pub struct Channel {
    drop_prob: f64,
    comm_range: f64,
    rng: ChaCha8Rng,
    pub draws: u64,
    pub deliveries: u64,
}

impl Channel {
    pub fn new(drop_prob: f64, comm_range: f64, seed: u64) -> Self {
        Self {
            drop_prob,
            comm_range,
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
            deliveries: 0,
        }
    }

    pub fn drop_prob(&self) -> f64 {
        self.drop_prob
    }

    /// One loss trial for a frame sent from `from` to a robot at `to`.
    /// Out-of-range pairs never draw.
    pub fn deliver(&mut self, from: &Pose, to: &Pose) -> bool {
        if from.distance(to) > self.comm_range {
            return false;
        }
        self.draws += 1;
        let ok = self.rng.gen::<f64>() < 1.0 - self.drop_prob;
        if ok {
            self.deliveries += 1;
        }
        ok
    }

    /// Route this step's frames. `envelopes` must be sorted by sender and
    /// `receivers` by id; both orders fix the random draw schedule. The
    /// returned inboxes are indexed like `receivers`, each sorted by sender.
    pub fn step<R: Clone>(
        &mut self,
        envelopes: &[Envelope<R>],
        receivers: &[(u16, Pose)],
    ) -> Vec<Vec<Envelope<R>>> {
        let mut inboxes = vec![Vec::new(); receivers.len()];
        for env in envelopes {
            for (slot, (id, pose)) in receivers.iter().enumerate() {
                if *id == env.sender {
                    continue;
                }
                if self.deliver(&env.pose, pose) {
                    inboxes[slot].push(env.clone());
                }
            }
        }
        inboxes
    }
}

use super::protocol::{MessageKind, ProtocolGuard, WireMessage, PROTOCOL_VERSION};
use super::transport::{Link, LinkError};
use super::OrchestratorError;
use crate::envs::Environment;
use crate::reward::global_rewards;

fn link_err(cfd_id: u32) -> impl Fn(LinkError) -> OrchestratorError {
    move |source| OrchestratorError::Link { cfd_id, source }
}

/// Serves episodes for one environment until the coordinator sends
/// `Shutdown` or goes away.
pub fn run_worker(
    link: &mut dyn Link,
    env: &mut dyn Environment,
    cfd_id: u32,
    gamma: f64,
) -> Result<(), OrchestratorError> {
    let n_marl = env.n_marl();
    let n_actions = env.episode().n_actions;
    let hello = vec![
        f64::from(PROTOCOL_VERSION),
        env.obs_size() as f64,
        1.0,
        n_marl as f64,
        n_actions as f64,
    ];
    let err = link_err(cfd_id);
    link.send(&WireMessage::new(MessageKind::Hello, cfd_id, 0, 0, hello))
        .map_err(&err)?;
    let step_u32 = |k: usize| u32::try_from(k).expect("step fits in u32");
    loop {
        let msg = match link.recv(None) {
            Ok(m) => m,
            Err(LinkError::Closed) => return Ok(()),
            Err(e) => return Err(err(e)),
        };
        match msg.kind {
            MessageKind::Shutdown => return Ok(()),
            MessageKind::Hello => {}
            other => {
                return Err(OrchestratorError::Protocol(format!(
                    "worker {cfd_id} got {other:?} while idle; expected Hello or Shutdown"
                )))
            }
        }
        let seed = match msg.payload.as_slice() {
            [lo, hi] => (*lo as u64) | ((*hi as u64) << 32),
            _ => {
                return Err(OrchestratorError::Protocol(format!(
                    "episode Hello for worker {cfd_id} needs [seed_lo, seed_hi]"
                )))
            }
        };
        let mut guards: Vec<ProtocolGuard> = (0..n_marl)
            .map(|m| ProtocolGuard::new(cfd_id, m as u32, step_u32(n_actions)))
            .collect();
        guards.iter_mut().for_each(ProtocolGuard::start_episode);
        let obs = env.reset(seed)?;
        let mut record: Vec<f64> = Vec::new();
        for (m, o) in obs.into_iter().enumerate() {
            guards[m].observe(MessageKind::State, 0)?;
            link.send(&WireMessage::new(MessageKind::State, cfd_id, m as u32, 0, o.values))
                .map_err(&err)?;
        }
        for k in 0..n_actions {
            let mut actions = vec![None; n_marl];
            for _ in 0..n_marl {
                let a = link.recv(None).map_err(&err)?;
                let m = a.marl_id as usize;
                if a.kind != MessageKind::Action || a.cfd_id != cfd_id || m >= n_marl || a.payload.len() != 1 {
                    return Err(OrchestratorError::Protocol(format!(
                        "worker {cfd_id} expected a one-value Action for step {k}, got {:?} (cfd {}, marl {}, {} values)",
                        a.kind,
                        a.cfd_id,
                        a.marl_id,
                        a.payload.len()
                    )));
                }
                guards[m].observe(MessageKind::Action, a.step)?;
                actions[m] = Some(a.payload[0]);
            }
            let actions: Vec<f64> = actions.into_iter().map(|a| a.expect("every slot filled")).collect();
            let out = env.step_action(&actions)?;
            record.extend(out.env_record.iter().flat_map(|s| [s.t, s.c_l, s.c_d]));
            let global = global_rewards(&out.local_rewards, gamma);
            let step = step_u32(k);
            for (m, view) in out.views.into_iter().enumerate() {
                let rewards = [global[m], out.local_rewards[m]];
                let msg = if out.done {
                    guards[m].observe(MessageKind::Reward, step)?;
                    WireMessage::new(MessageKind::Reward, cfd_id, m as u32, step, rewards.to_vec())
                } else {
                    guards[m].observe(MessageKind::State, step + 1)?;
                    let mut payload = view.observation.values;
                    payload.extend_from_slice(&rewards);
                    WireMessage::new(MessageKind::State, cfd_id, m as u32, step + 1, payload)
                };
                link.send(&msg).map_err(&err)?;
            }
        }
        link.send(&WireMessage::new(
            MessageKind::EpisodeEnd,
            cfd_id,
            0,
            step_u32(n_actions),
            record,
        ))
        .map_err(&err)?;
    }
}

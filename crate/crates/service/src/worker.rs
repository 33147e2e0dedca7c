use std::sync::Arc;
use std::time::Instant;

use nusrecon::io::{parse_schedule, SignalContainer};
use nusrecon::pipeline::{reconstruct, ReconConfig};

use crate::store::{Store, CONFIG, INPUT, SCHEDULE};
use crate::{api, ServiceConfig};

fn execute(store: &Store, cfg: &ServiceConfig, id: &str) -> Result<(Vec<u8>, Vec<u8>, f64), String> {
    let dir = store.job_dir(id);
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    let input = SignalContainer::from_bytes(&read(INPUT)?).map_err(|e| e.to_string())?;
    let text = String::from_utf8(read(SCHEDULE)?).map_err(|_| "schedule is not UTF-8".to_string())?;
    let schedule = parse_schedule(&text).map_err(|e| e.to_string())?;
    let config: ReconConfig = serde_json::from_slice(&read(CONFIG)?).map_err(|e| e.to_string())?;
    let weights = match &config.weights {
        Some(name) => Some(api::load_weights(cfg, name).map_err(|e| e.to_string())?),
        None => None,
    };
    let t = Instant::now();
    let out = reconstruct(&input, &schedule, &config, weights.as_ref()).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let diagnostics = serde_json::to_vec_pretty(&out.diagnostics).expect("diagnostics serialise");
    Ok((out.spectrum.to_bytes(), diagnostics, secs))
}

pub(crate) async fn run(store: Arc<Store>, cfg: Arc<ServiceConfig>) {
    loop {
        let job = match store.claim() {
            Ok(Some(job)) => job,
            Ok(None) => {
                store.wake.notified().await;
                continue;
            }
            Err(e) => {
                eprintln!("queue: {e}");
                tokio::time::sleep(std::time::Duration::from_millis(200)).await;
                continue;
            }
        };
        let (s, c, id) = (store.clone(), cfg.clone(), job.id.clone());
        let outcome = tokio::task::spawn_blocking(move || execute(&s, &c, &id))
            .await
            .unwrap_or_else(|e| Err(format!("worker panicked: {e}")));
        if let Err(e) = store.finish(&job.id, outcome) {
            eprintln!("job {}: {e}", job.id);
        }
    }
}

//! Sampling over TCP: the data owner deals weight shares to three party
//! daemons, which run the reverse process together and send back their
//! output shares and cost views.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::denoiser::{deal_params, SharedParams};
use super::params::{DenoiserParams, DenoiserShape};
use super::sampler::SamplerConfig;
use crate::error::{Error, Result};
use crate::rss::{
    reconstruct_tensor, seeded_stream, stream, Party, PartyId, PartySetup, ShareTensor,
};
use crate::transport::tcp::{connect_client, establish, FrameStream, TcpOptions};
use crate::transport::{CostReport, Network};

#[derive(Serialize, Deserialize)]
struct WireShare {
    shape: Vec<usize>,
    lo: Vec<u64>,
    hi: Vec<u64>,
}

impl WireShare {
    fn from_share(s: &ShareTensor) -> Self {
        WireShare {
            shape: s.shape().to_vec(),
            lo: s.lo.clone(),
            hi: s.hi.clone(),
        }
    }

    fn into_share(self) -> Result<ShareTensor> {
        ShareTensor::new(self.shape, self.lo, self.hi)
    }
}

#[derive(Serialize, Deserialize)]
struct Job {
    params: BTreeMap<String, WireShare>,
}

#[derive(Serialize, Deserialize)]
enum Reply {
    Done { output: WireShare, cost: CostReport },
    Failed { message: String },
}

fn decode<T: for<'de> Deserialize<'de>>(what: &'static str, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::format(what, e.to_string()))
}

/// Runs one party daemon: waits for peers and the client, receives its
/// weight shares, samples, and returns its output share to the client.
pub fn serve_party(opts: &TcpOptions, cfg: &SamplerConfig) -> Result<CostReport> {
    let opts = TcpOptions {
        expect_client: true,
        ..opts.clone()
    };
    let session = establish(&opts)?;
    let mut client = session
        .client
        .ok_or_else(|| Error::Argument("no client connected".into()))?;
    let job: Job = decode("job", &client.read_frame()?)?;
    log::info!("{}: received {} weight tensors", opts.id, job.params.len());
    let mut tensors = BTreeMap::new();
    for (name, w) in job.params {
        tensors.insert(name, w.into_share()?);
    }
    let shape = DenoiserShape::for_image(cfg.image_w, cfg.image_h);
    let mut net = Network::new(opts.id, Box::new(session.link));
    let result = SharedParams::new(shape, tensors).and_then(|shared| {
        let setup = PartySetup::from_master(cfg.seed);
        let mut party = Party::new(&mut net, &setup, cfg.enc);
        party.sample(&shared, cfg)
    });
    match result {
        Ok(out) => {
            log::info!("{}: sampling finished", opts.id);
            let cost = CostReport::from_single(opts.id.index(), &net.take_cost());
            let reply = Reply::Done {
                output: WireShare::from_share(&out),
                cost: cost.clone(),
            };
            client.write_frame(&serde_json::to_vec(&reply).expect("reply serializes"))?;
            Ok(cost)
        }
        Err(e) => {
            let reply = Reply::Failed {
                message: e.to_string(),
            };
            // best effort: the client may already be gone
            let _ = client.write_frame(&serde_json::to_vec(&reply).expect("reply serializes"));
            Err(Error::Abort {
                party: opts.id,
                source: Box::new(e),
            })
        }
    }
}

/// Data-owner side: deals shares of `params`, collects the output shares and
/// reconstructs `x_0` before clamping. Dealing uses the same stream as the
/// in-process run, so both backends give identical results.
pub fn sample_mpc_tcp(
    addrs: &[String; 3],
    config_hash: u32,
    connect_timeout: Duration,
    params: &DenoiserParams,
    cfg: &SamplerConfig,
) -> Result<(Vec<f64>, CostReport)> {
    if params.shape().pixels != cfg.pixels() {
        return Err(Error::Shape(format!(
            "parameters are for {} pixels, image has {}",
            params.shape().pixels,
            cfg.pixels()
        )));
    }
    let shared = deal_params(
        params,
        cfg.enc,
        &mut seeded_stream(cfg.seed, stream::DEALER),
    )?;
    let mut links: Vec<FrameStream> = Vec::with_capacity(3);
    for addr in addrs {
        links.push(connect_client(addr, config_hash, connect_timeout)?);
    }
    for (link, share) in links.iter_mut().zip(&shared) {
        let job = Job {
            params: share
                .tensors()
                .iter()
                .map(|(k, v)| (k.clone(), WireShare::from_share(v)))
                .collect(),
        };
        link.write_frame(&serde_json::to_vec(&job).expect("job serializes"))?;
    }
    let mut outs = Vec::with_capacity(3);
    let mut costs = Vec::with_capacity(3);
    for (i, link) in links.iter_mut().enumerate() {
        match decode::<Reply>("reply", &link.read_frame()?)? {
            Reply::Done { output, cost } => {
                outs.push(output.into_share()?);
                costs.push(cost);
            }
            Reply::Failed { message } => {
                return Err(Error::Abort {
                    party: PartyId::new(i)?,
                    source: Box::new(Error::Argument(message)),
                })
            }
        }
    }
    let outs: [ShareTensor; 3] = outs.try_into().expect("three replies");
    let ring = reconstruct_tensor(&outs)?;
    Ok((
        cfg.enc.decode_slice(ring.data()),
        CostReport::combine_parties(&costs),
    ))
}

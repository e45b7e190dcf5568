//! In-process stand-in for a set of distributed ranks.
//!
//! Each rank runs on its own thread. Ranks expose data by publishing
//! serialized regions into a shared snapshot store; any rank can fetch a
//! published region with [`RankHandle::one_sided_get`] without the owner
//! doing anything. [`RankHandle::barrier`] is the only blocking primitive.
//!
//! Visibility follows epochs: a rank in epoch `e` sees, for each
//! `(owner, name)`, the newest version published in an epoch `<= e`.
//! Publishing the same name twice in one epoch is an error. Published bytes
//! are immutable.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use crate::error::{usage, Error, Result};
use crate::wire::RegionHeader;

pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(60);

/// One logged remote read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GetRecord {
    /// The rank that issued the get.
    pub source: usize,
    /// The rank that owns the region.
    pub target: usize,
    pub region: String,
    pub bytes: usize,
    pub epoch: u64,
    /// Free-form label set by the getter, e.g. the pipeline phase.
    pub tag: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommLog {
    pub records: Vec<GetRecord>,
}

impl CommLog {
    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes).sum()
    }

    pub fn by_source(&self, rank: usize) -> impl Iterator<Item = &GetRecord> {
        self.records.iter().filter(move |r| r.source == rank)
    }

    pub fn tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a GetRecord> {
        self.records.iter().filter(move |r| r.tag == tag)
    }
}

struct Version {
    epoch: u64,
    bytes: Arc<[u8]>,
}

struct BarrierState {
    arrived: usize,
    generation: u64,
}

struct Shared {
    num_ranks: usize,
    watchdog: Duration,
    store: RwLock<HashMap<(usize, String), Vec<Version>>>,
    barrier: Mutex<BarrierState>,
    released: Condvar,
    aborted: AtomicBool,
    first_error: Mutex<Option<Error>>,
    log: Mutex<Vec<GetRecord>>,
}

impl Shared {
    fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        // take the lock so waiters cannot miss the wakeup
        let _guard = self.barrier.lock().unwrap();
        self.released.notify_all();
    }

    fn prune(&self) {
        let mut store = self.store.write().unwrap();
        for versions in store.values_mut() {
            if versions.len() > 1 {
                versions.drain(..versions.len() - 1);
            }
        }
    }
}

/// A simulated world of `num_ranks` ranks.
pub struct RankWorld {
    shared: Arc<Shared>,
}

impl RankWorld {
    pub fn new(num_ranks: usize) -> Result<Self> {
        if num_ranks == 0 {
            return Err(usage("a world needs at least one rank"));
        }
        Ok(Self {
            shared: Arc::new(Shared {
                num_ranks,
                watchdog: DEFAULT_WATCHDOG,
                store: RwLock::new(HashMap::new()),
                barrier: Mutex::new(BarrierState { arrived: 0, generation: 0 }),
                released: Condvar::new(),
                aborted: AtomicBool::new(false),
                first_error: Mutex::new(None),
                log: Mutex::new(Vec::new()),
            }),
        })
    }

    /// Barrier timeout used to detect mismatched barrier counts.
    pub fn with_watchdog(self, timeout: Duration) -> Self {
        let mut shared = Arc::try_unwrap(self.shared).unwrap_or_else(|_| unreachable!());
        shared.watchdog = timeout;
        Self { shared: Arc::new(shared) }
    }

    pub fn num_ranks(&self) -> usize {
        self.shared.num_ranks
    }

    /// Runs `body` once per rank, concurrently, and returns the per-rank
    /// results in rank order. The first rank error aborts the world and is
    /// returned.
    pub fn run<R, F>(&self, body: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&RankHandle<'_>) -> Result<R> + Sync,
    {
        let shared = &*self.shared;
        let results: Vec<Option<R>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..shared.num_ranks)
                .map(|rank| {
                    let body = &body;
                    s.spawn(move || {
                        let handle = RankHandle {
                            shared,
                            rank,
                            epoch: AtomicU64::new(0),
                            tag: Mutex::new(String::new()),
                        };
                        match body(&handle) {
                            Ok(r) => Some(r),
                            Err(e) => {
                                let mut first = shared.first_error.lock().unwrap();
                                if first.is_none() && !matches!(e, Error::WorldAborted { .. }) {
                                    *first = Some(e);
                                }
                                drop(first);
                                shared.abort();
                                None
                            }
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
                .collect()
        });
        if let Some(err) = shared.first_error.lock().unwrap().take() {
            return Err(err);
        }
        if results.iter().any(Option::is_none) {
            return Err(Error::WorldAborted { rank: 0 });
        }
        Ok(results.into_iter().map(Option::unwrap).collect())
    }

    pub fn comm_log(&self) -> CommLog {
        CommLog { records: self.shared.log.lock().unwrap().clone() }
    }

    pub fn clear_comm_log(&self) {
        self.shared.log.lock().unwrap().clear();
    }
}

/// A rank's view of the world.
pub struct RankHandle<'w> {
    shared: &'w Shared,
    rank: usize,
    epoch: AtomicU64,
    tag: Mutex<String>,
}

impl RankHandle<'_> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_ranks(&self) -> usize {
        self.shared.num_ranks
    }

    pub fn epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    /// Label attached to subsequent [`GetRecord`]s issued by this rank.
    pub fn set_tag(&self, tag: &str) {
        *self.tag.lock().unwrap() = tag.to_owned();
    }

    /// Exposes `payload` (a serialized region) under `name` for the current epoch.
    pub fn publish(&self, name: &str, payload: Vec<u8>) -> Result<u64> {
        let header = RegionHeader::parse(&payload)?;
        if header.region_len()? != payload.len() {
            return Err(Error::Format(format!(
                "region {name:?} is {} bytes, header implies {}",
                payload.len(),
                header.region_len()?
            )));
        }
        let epoch = self.epoch();
        let mut store = self.shared.store.write().unwrap();
        let versions = store.entry((self.rank, name.to_owned())).or_default();
        if versions.iter().any(|v| v.epoch == epoch) {
            return Err(usage(format!(
                "rank {} already published {name:?} in epoch {epoch}",
                self.rank
            )));
        }
        versions.push(Version { epoch, bytes: payload.into() });
        Ok(epoch)
    }

    /// Reads `target`'s region `name`. The target takes no part.
    pub fn one_sided_get(&self, target: usize, name: &str) -> Result<Arc<[u8]>> {
        if target >= self.shared.num_ranks {
            return Err(usage(format!("rank {target} does not exist")));
        }
        let epoch = self.epoch();
        let bytes = {
            let store = self.shared.store.read().unwrap();
            store
                .get(&(target, name.to_owned()))
                .and_then(|vs| vs.iter().rev().find(|v| v.epoch <= epoch))
                .map(|v| Arc::clone(&v.bytes))
        }
        .ok_or_else(|| Error::RegionNotFound { target, name: name.to_owned() })?;
        self.shared.log.lock().unwrap().push(GetRecord {
            source: self.rank,
            target,
            region: name.to_owned(),
            bytes: bytes.len(),
            epoch,
            tag: self.tag.lock().unwrap().clone(),
        });
        Ok(bytes)
    }

    /// Blocks until every rank has arrived, then advances the epoch.
    pub fn barrier(&self) -> Result<()> {
        let shared = self.shared;
        let aborted = || Error::WorldAborted { rank: self.rank };
        let mut state = shared.barrier.lock().unwrap();
        if shared.aborted.load(Ordering::SeqCst) {
            return Err(aborted());
        }
        state.arrived += 1;
        if state.arrived == shared.num_ranks {
            state.arrived = 0;
            state.generation += 1;
            shared.prune();
            shared.released.notify_all();
        } else {
            let generation = state.generation;
            let deadline = Instant::now() + shared.watchdog;
            while state.generation == generation {
                if shared.aborted.load(Ordering::SeqCst) {
                    return Err(aborted());
                }
                let now = Instant::now();
                if now >= deadline {
                    drop(state);
                    return Err(Error::Deadlock { rank: self.rank, timeout: shared.watchdog });
                }
                state = shared.released.wait_timeout(state, deadline - now).unwrap().0;
            }
        }
        self.epoch.fetch_add(1, Ordering::AcqRel);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::metric::Metric;
    use crate::wire::encode_dataset;

    fn region(values: &[f32]) -> Vec<u8> {
        encode_dataset(&Dataset::new(values.to_vec(), 1, Metric::L2).unwrap())
    }

    #[test]
    fn ranks_report_in_order() {
        assert_eq!(RankWorld::new(1).unwrap().run(|h| Ok(h.rank())).unwrap(), vec![0]);
        assert_eq!(RankWorld::new(4).unwrap().run(|h| Ok(h.rank())).unwrap(), vec![0, 1, 2, 3]);
        assert!(RankWorld::new(0).is_err());
    }

    #[test]
    fn matched_barriers_complete() {
        let world = RankWorld::new(4).unwrap();
        let epochs = world
            .run(|h| {
                for _ in 0..4 {
                    h.barrier()?;
                }
                Ok(h.epoch())
            })
            .unwrap();
        assert_eq!(epochs, vec![4; 4]);
    }

    #[test]
    fn mismatched_barriers_hit_watchdog() {
        let world = RankWorld::new(2).unwrap().with_watchdog(Duration::from_millis(200));
        let err = world
            .run(|h| {
                if h.rank() == 0 {
                    h.barrier()?;
                }
                Ok(())
            })
            .unwrap_err();
        assert!(matches!(err, Error::Deadlock { rank: 0, .. }), "{err:?}");
    }

    #[test]
    fn rank_failure_aborts_waiters() {
        let world = RankWorld::new(3).unwrap();
        let err = world
            .run(|h| {
                if h.rank() == 2 {
                    return Err(usage("boom"));
                }
                h.barrier()
            })
            .unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m == "boom"), "{err:?}");
    }

    #[test]
    fn get_own_region_and_errors() {
        let world = RankWorld::new(2).unwrap();
        let payload = region(&[1.0, 2.0, 3.0]);
        world
            .run(|h| {
                assert!(matches!(h.one_sided_get(1 - h.rank(), "x"), Err(Error::RegionNotFound { .. })));
                h.barrier()?;
                h.publish("x", payload.clone())?;
                assert!(h.publish("x", payload.clone()).is_err());
                assert_eq!(&*h.one_sided_get(h.rank(), "x")?, payload.as_slice());
                assert!(h.one_sided_get(5, "x").is_err());
                h.barrier()?;
                assert_eq!(&*h.one_sided_get(1 - h.rank(), "x")?, payload.as_slice());
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn publish_validates_region() {
        let world = RankWorld::new(1).unwrap();
        world
            .run(|h| {
                assert!(h.publish("junk", vec![1, 2, 3]).is_err());
                let mut r = region(&[1.0]);
                r.push(0);
                assert!(h.publish("long", r).is_err());
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn later_versions_stay_invisible_to_earlier_epochs() {
        let world = RankWorld::new(2).unwrap();
        let v0 = region(&[0.0]);
        let v1 = region(&[1.0]);
        world
            .run(|h| {
                if h.rank() == 0 {
                    h.publish("g", v0.clone())?;
                }
                h.barrier()?;
                if h.rank() == 0 {
                    h.publish("g", v1.clone())?;
                    assert_eq!(&*h.one_sided_get(0, "g")?, v1.as_slice());
                } else {
                    // epoch-1 version is the newest visible regardless of timing
                    let got = h.one_sided_get(0, "g")?;
                    assert!(&*got == v0.as_slice() || &*got == v1.as_slice());
                }
                h.barrier()?;
                assert_eq!(&*h.one_sided_get(0, "g")?, v1.as_slice());
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn log_counts_bytes() {
        let world = RankWorld::new(3).unwrap();
        let payload = region(&[1.0, 2.0]);
        world
            .run(|h| {
                h.publish("d", payload.clone())?;
                h.barrier()?;
                h.set_tag("pull");
                for t in 0..3 {
                    if t != h.rank() {
                        h.one_sided_get(t, "d")?;
                    }
                }
                Ok(())
            })
            .unwrap();
        let log = world.comm_log();
        assert_eq!(log.records.len(), 6);
        assert_eq!(log.total_bytes(), 6 * payload.len());
        assert_eq!(log.tagged("pull").count(), 6);
        assert!(log.records.iter().all(|r| r.epoch == 1 && r.source != r.target));
    }
}

//! In-process partitioned map/filter executor.
//!
//! A [`Dataset`] is an ordered list of record blocks. Stages are applied
//! block by block on a worker pool and the resulting blocks are concatenated
//! in block order, so output never depends on the number of workers or on
//! how the input was partitioned. Stage bodies must be pure: they may read
//! the shared broadcast context but must not mutate shared state.
//!
//! With the `parallel` feature disabled every engine runs blocks one after
//! another on the calling thread; results are identical.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DataflowError {
    #[error("stage `{stage}` failed on record {record_index}: {cause}")]
    StageFailure {
        stage: String,
        record_index: usize,
        cause: String,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Ordered record blocks. Concatenating the blocks in order yields the
/// logical record sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset<T> {
    partitions: Vec<Vec<T>>,
}

impl<T> Dataset<T> {
    /// Splits `records` into `n` contiguous blocks whose sizes differ by at
    /// most one, larger blocks first.
    pub fn partition(records: Vec<T>, n: usize) -> Self {
        let n = n.max(1);
        let total = records.len();
        let base = total / n;
        let extra = total % n;
        let mut partitions = Vec::with_capacity(n);
        let mut it = records.into_iter();
        for i in 0..n {
            let size = base + usize::from(i < extra);
            partitions.push(it.by_ref().take(size).collect());
        }
        Self { partitions }
    }

    pub fn from_partitions(partitions: Vec<Vec<T>>) -> Self {
        Self { partitions }
    }

    pub fn partitions(&self) -> &[Vec<T>] {
        &self.partitions
    }

    pub fn num_partitions(&self) -> usize {
        self.partitions.len()
    }

    pub fn len(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.partitions.iter().flatten()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.partitions.into_iter().flatten().collect()
    }

    /// Re-splits into `n` balanced blocks, keeping record order.
    pub fn rebalance(self, n: usize) -> Self {
        Self::partition(self.into_vec(), n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Map,
    Filter,
    FlatMap,
    /// A map that consults a read-only reference dataset held in the
    /// broadcast context.
    JoinReference,
}

impl StageKind {
    pub fn label(self) -> &'static str {
        match self {
            StageKind::Map => "map",
            StageKind::Filter => "filter",
            StageKind::FlatMap => "flat_map",
            StageKind::JoinReference => "join_reference",
        }
    }
}

type StageBody<I, O, C> = dyn Fn(I, &C, &mut Vec<O>) -> Result<(), String> + Send + Sync;

/// One named transformation from records of type `I` to records of type
/// `O`, with read access to a broadcast context `C`.
pub struct Stage<I, O, C> {
    name: String,
    kind: StageKind,
    body: Box<StageBody<I, O, C>>,
}

impl<I, O, C> Stage<I, O, C> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> StageKind {
        self.kind
    }

    pub fn map<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(I, &C) -> O + Send + Sync + 'static,
    {
        Self::try_map(name, move |r, c| Ok(f(r, c)))
    }

    pub fn try_map<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(I, &C) -> Result<O, String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: StageKind::Map,
            body: Box::new(move |r, c, out| {
                out.push(f(r, c)?);
                Ok(())
            }),
        }
    }

    pub fn flat_map<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(I, &C) -> Vec<O> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: StageKind::FlatMap,
            body: Box::new(move |r, c, out| {
                out.extend(f(r, c));
                Ok(())
            }),
        }
    }

    pub fn join_reference<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(I, &C) -> O + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: StageKind::JoinReference,
            body: Box::new(move |r, c, out| {
                out.push(f(r, c));
                Ok(())
            }),
        }
    }
}

impl<T, C> Stage<T, T, C> {
    pub fn filter<F>(name: impl Into<String>, pred: F) -> Self
    where
        F: Fn(&T, &C) -> bool + Send + Sync + 'static,
    {
        Self::try_filter(name, move |r, c| Ok(pred(r, c)))
    }

    pub fn try_filter<F>(name: impl Into<String>, pred: F) -> Self
    where
        F: Fn(&T, &C) -> Result<bool, String> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            kind: StageKind::Filter,
            body: Box::new(move |r, c, out| {
                if pred(&r, c)? {
                    out.push(r);
                }
                Ok(())
            }),
        }
    }
}

/// Timing and record counts for one executed stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMetrics {
    pub stage: String,
    pub kind: StageKind,
    pub in_count: usize,
    pub out_count: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub workers: usize,
    pub stages: Vec<StageMetrics>,
    /// Peak resident set size of the process in KiB, where the OS reports it.
    pub peak_rss_kb: Option<u64>,
}

impl RunMetrics {
    pub fn total_seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }

    pub fn stage(&self, name: &str) -> Option<&StageMetrics> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// `stage\tin_count\tout_count\tseconds`, one row per stage.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("stage\tin_count\tout_count\tseconds\n");
        for s in &self.stages {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}",
                s.stage, s.in_count, s.out_count, s.seconds
            );
        }
        out
    }
}

/// Peak resident memory in KiB as reported by `/proc/self/status`.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
}

/// Owns the worker pool. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    workers: usize,
    #[cfg(feature = "parallel")]
    pool: Option<std::sync::Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("workers", &self.workers)
            .field("parallel", &self.is_parallel())
            .finish()
    }
}

/// Blocks per worker used when the engine partitions input itself.
pub const PARTITIONS_PER_WORKER: usize = 4;

impl Engine {
    /// An engine with `workers` threads (at least one).
    pub fn new(workers: usize) -> Result<Self, DataflowError> {
        let workers = workers.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = if workers > 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("mirflow-worker-{i}"))
                    .build()
                    .map_err(|e| DataflowError::Pool(e.to_string()))?;
                Some(std::sync::Arc::new(pool))
            } else {
                None
            };
            Ok(Self { workers, pool })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Self { workers })
    }

    /// Single-threaded engine; runs every block on the calling thread.
    pub fn sequential() -> Self {
        Self {
            workers: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Default block count for input partitioned by this engine.
    pub fn default_partitions(&self) -> usize {
        self.workers * PARTITIONS_PER_WORKER
    }

    /// Applies one stage to every block.
    pub fn apply<I, O, C>(
        &self,
        stage: &Stage<I, O, C>,
        input: Dataset<I>,
        ctx: &C,
    ) -> Result<(Dataset<O>, StageMetrics), DataflowError>
    where
        I: Send,
        O: Send,
        C: Sync,
    {
        let started = Instant::now();
        let in_count = input.len();
        let mut offsets = Vec::with_capacity(input.partitions.len());
        let mut acc = 0;
        for p in &input.partitions {
            offsets.push(acc);
            acc += p.len();
        }
        let jobs: Vec<(usize, Vec<I>)> = offsets.into_iter().zip(input.partitions).collect();
        let results = self.run_jobs(jobs, |(offset, block)| run_block(stage, offset, block, ctx));

        let mut partitions = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(block) => partitions.push(block),
                Err((record_index, cause)) => {
                    return Err(DataflowError::StageFailure {
                        stage: stage.name.clone(),
                        record_index,
                        cause,
                    })
                }
            }
        }
        let output = Dataset { partitions };
        let metrics = StageMetrics {
            stage: stage.name.clone(),
            kind: stage.kind,
            in_count,
            out_count: output.len(),
            seconds: started.elapsed().as_secs_f64(),
        };
        Ok((output, metrics))
    }

    /// Runs a homogeneous plan stage by stage.
    pub fn run_pipeline<T, C>(
        &self,
        plan: &[Stage<T, T, C>],
        input: Dataset<T>,
        ctx: &C,
    ) -> Result<(Dataset<T>, RunMetrics), DataflowError>
    where
        T: Send,
        C: Sync,
    {
        let mut run = Run::new(self);
        let mut data = input;
        for stage in plan {
            data = run.apply(stage, data, ctx)?;
        }
        Ok((data, run.finish()))
    }

    /// Order-preserving parallel map over a plain list.
    pub fn map_items<I, O, F>(&self, items: Vec<I>, f: F) -> Vec<O>
    where
        I: Send,
        O: Send,
        F: Fn(I) -> O + Send + Sync,
    {
        let ds = Dataset::partition(items, self.default_partitions());
        self.run_jobs(ds.partitions, |block| block.into_iter().map(&f).collect::<Vec<O>>())
            .into_iter()
            .flatten()
            .collect()
    }

    fn run_jobs<J, R, F>(&self, jobs: Vec<J>, f: F) -> Vec<R>
    where
        J: Send,
        R: Send,
        F: Fn(J) -> R + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| jobs.into_par_iter().map(&f).collect());
        }
        jobs.into_iter().map(f).collect()
    }
}

fn run_block<I, O, C>(
    stage: &Stage<I, O, C>,
    offset: usize,
    block: Vec<I>,
    ctx: &C,
) -> Result<Vec<O>, (usize, String)> {
    let mut out = Vec::with_capacity(block.len());
    for (i, record) in block.into_iter().enumerate() {
        (stage.body)(record, ctx, &mut out).map_err(|cause| (offset + i, cause))?;
    }
    Ok(out)
}

/// Accumulates per-stage metrics across a heterogeneous chain of stages.
pub struct Run<'e> {
    engine: &'e Engine,
    metrics: Vec<StageMetrics>,
}

impl<'e> Run<'e> {
    pub fn new(engine: &'e Engine) -> Self {
        Self {
            engine,
            metrics: Vec::new(),
        }
    }

    pub fn engine(&self) -> &Engine {
        self.engine
    }

    pub fn apply<I, O, C>(
        &mut self,
        stage: &Stage<I, O, C>,
        input: Dataset<I>,
        ctx: &C,
    ) -> Result<Dataset<O>, DataflowError>
    where
        I: Send,
        O: Send,
        C: Sync,
    {
        let (out, m) = self.engine.apply(stage, input, ctx)?;
        self.metrics.push(m);
        Ok(out)
    }

    /// Records a step executed outside the engine (e.g. a driver-side merge).
    pub fn record(&mut self, stage: &str, kind: StageKind, in_count: usize, out_count: usize, seconds: f64) {
        self.metrics.push(StageMetrics {
            stage: stage.to_string(),
            kind,
            in_count,
            out_count,
            seconds,
        });
    }

    pub fn finish(self) -> RunMetrics {
        collect_metrics(self)
    }
}

/// Closes a run and reports its per-stage metrics.
pub fn collect_metrics(run: Run<'_>) -> RunMetrics {
    RunMetrics {
        workers: run.engine.workers,
        stages: run.metrics,
        peak_rss_kb: peak_rss_kb(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partition_sizes_balanced() {
        let ds = Dataset::partition((1..=10).collect::<Vec<_>>(), 3);
        let sizes: Vec<_> = ds.partitions().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(ds.into_vec(), (1..=10).collect::<Vec<_>>());

        let ds = Dataset::partition(vec![1], 8);
        assert_eq!(ds.num_partitions(), 8);
        assert_eq!(ds.partitions().iter().filter(|p| !p.is_empty()).count(), 1);

        let ds = Dataset::partition((1..=6).collect::<Vec<_>>(), 1);
        assert_eq!(ds.partitions(), &[vec![1, 2, 3, 4, 5, 6]]);
    }

    #[test]
    fn filter_even() {
        let plan = vec![Stage::filter("even", |x: &i32, _: &()| x % 2 == 0)];
        let engine = Engine::new(4).unwrap();
        let (out, _) = engine
            .run_pipeline(&plan, Dataset::partition((1..=6).collect(), 4), &())
            .unwrap();
        assert_eq!(out.into_vec(), vec![2, 4, 6]);
    }

    #[test]
    fn map_then_filter() {
        let plan = vec![
            Stage::map("double", |x: i32, _: &()| x * 2),
            Stage::filter("gt4", |x: &i32, _: &()| *x > 4),
        ];
        for w in [1, 2, 3, 8] {
            let engine = Engine::new(w).unwrap();
            let (out, _) = engine
                .run_pipeline(&plan, Dataset::partition(vec![1, 2, 3], w), &())
                .unwrap();
            assert_eq!(out.into_vec(), vec![6]);
        }
    }

    #[test]
    fn first_failure_is_deterministic() {
        let plan = vec![Stage::try_map("check", |x: usize, _: &()| {
            if x % 7 == 3 {
                Err(format!("bad {x}"))
            } else {
                Ok(x)
            }
        })];
        for w in [1, 2, 4, 8] {
            let engine = Engine::new(w).unwrap();
            let err = engine
                .run_pipeline(&plan, Dataset::partition((0..100).collect(), w * 4), &())
                .unwrap_err();
            assert_eq!(
                err,
                DataflowError::StageFailure {
                    stage: "check".into(),
                    record_index: 3,
                    cause: "bad 3".into()
                }
            );
        }
    }

    #[test]
    fn metrics_count_records() {
        let plan = vec![Stage::filter("drop40", |x: &usize, _: &()| *x >= 40)];
        let engine = Engine::new(2).unwrap();
        let (_, m) = engine
            .run_pipeline(&plan, Dataset::partition((0..100).collect(), 4), &())
            .unwrap();
        assert_eq!(m.stages[0].in_count, 100);
        assert_eq!(m.stages[0].out_count, 60);
        assert!(m.to_tsv().starts_with("stage\tin_count\tout_count\tseconds\ndrop40\t100\t60\t"));

        let (_, m) = engine
            .run_pipeline(&plan, Dataset::partition(Vec::new(), 4), &())
            .unwrap();
        assert_eq!((m.stages[0].in_count, m.stages[0].out_count), (0, 0));
    }

    #[test]
    fn broadcast_context_visible_to_join() {
        let reference: Vec<u32> = vec![10, 20, 30];
        let stage = Stage::join_reference("lookup", |i: usize, r: &Vec<u32>| r[i]);
        let engine = Engine::new(3).unwrap();
        let (out, m) = engine
            .apply(&stage, Dataset::partition(vec![2, 0, 1], 2), &reference)
            .unwrap();
        assert_eq!(out.into_vec(), vec![30, 10, 20]);
        assert_eq!(m.kind, StageKind::JoinReference);
    }

    #[test]
    fn map_items_preserves_order() {
        let engine = Engine::new(4).unwrap();
        let out = engine.map_items((0..1000).collect::<Vec<u64>>(), |x| x * x);
        assert_eq!(out, (0..1000u64).map(|x| x * x).collect::<Vec<_>>());
    }

    fn mixed_plan() -> Vec<Stage<u64, u64, u64>> {
        vec![
            Stage::map("mix", |x: u64, salt: &u64| x.wrapping_mul(6364136223846793005).wrapping_add(*salt)),
            Stage::filter("keep", |x: &u64, _: &u64| x % 3 != 0),
            Stage::flat_map("split", |x: u64, _: &u64| if x % 5 == 0 { vec![] } else { vec![x, x >> 7] }),
            Stage::map("fold", |x: u64, _: &u64| x % 1_000_003),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn output_independent_of_workers_and_partitions(input in proptest::collection::vec(any::<u64>(), 0..300)) {
            let plan = mixed_plan();
            let (reference, _) = Engine::sequential()
                .run_pipeline(&plan, Dataset::partition(input.clone(), 1), &17)
                .unwrap();
            let reference = reference.into_vec();
            for w in [1usize, 2, 4, 8] {
                let engine = Engine::new(w).unwrap();
                for parts in [1, w, 4 * w] {
                    let (out, _) = engine
                        .run_pipeline(&plan, Dataset::partition(input.clone(), parts), &17)
                        .unwrap();
                    prop_assert_eq!(out.into_vec(), reference.clone());
                }
            }
        }

        #[test]
        fn plans_compose(input in proptest::collection::vec(any::<u64>(), 0..200)) {
            let engine = Engine::new(3).unwrap();
            let whole = mixed_plan();
            let (all, _) = engine.run_pipeline(&whole, Dataset::partition(input.clone(), 5), &1).unwrap();
            let mut head = mixed_plan();
            let tail = head.split_off(2);
            let (mid, _) = engine.run_pipeline(&head, Dataset::partition(input, 5), &1).unwrap();
            let (two_step, _) = engine.run_pipeline(&tail, mid, &1).unwrap();
            prop_assert_eq!(all.into_vec(), two_step.into_vec());
        }

        #[test]
        fn filters_and_maps_keep_shape(input in proptest::collection::vec(0u32..1000, 0..200)) {
            let engine = Engine::new(2).unwrap();
            let keep = Stage::filter("odd", |x: &u32, _: &()| x % 2 == 1);
            let (out, m) = engine.apply(&keep, Dataset::partition(input.clone(), 3), &()).unwrap();
            let out = out.into_vec();
            prop_assert!(out.iter().all(|x| input.contains(x)));
            prop_assert_eq!(m.out_count, out.len());
            let inc = Stage::map("inc", |x: u32, _: &()| x + 1);
            let (mapped, m) = engine.apply(&inc, Dataset::partition(input.clone(), 3), &()).unwrap();
            prop_assert_eq!(mapped.len(), input.len());
            prop_assert_eq!(m.in_count, m.out_count);
        }
    }
}

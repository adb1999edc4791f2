//! Labeled samples, multi-task samples and the labeled-sample CSV format.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{check_sample, Point};

/// Seeded random stream used everywhere randomness is needed.
pub type Rng = ChaCha8Rng;

/// Independent substream `stream` of the generator seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for item `index` of a run seeded with `seed` (SplitMix64 mix).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Anything that can draw labeled examples `(x, y)`, `y` in `{-1, +1}`.
pub trait DataSource: Sync {
    fn draw(&self, rng: &mut Rng) -> (Point, f64);

    fn sample(&self, m: usize, rng: &mut Rng) -> LabeledSample {
        let (points, labels) = (0..m).map(|_| self.draw(rng)).unzip();
        LabeledSample { points, labels }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub points: Vec<Point>,
    pub labels: Vec<f64>,
}

impl LabeledSample {
    pub fn new(points: Vec<Point>, labels: Vec<f64>) -> Result<Self> {
        let s = LabeledSample { points, labels };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(Error::input("points and labels differ in length"));
        }
        check_sample(&self.points)?;
        check_labels(&self.labels)
    }
}

pub(crate) fn check_labels(labels: &[f64]) -> Result<()> {
    match labels.iter().position(|&y| y != 1.0 && y != -1.0) {
        Some(i) => Err(Error::input(format!(
            "label {} at index {i} is not in {{-1, +1}}",
            labels[i]
        ))),
        None => Ok(()),
    }
}

/// `n` labeled samples of a common size `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaskSample {
    pub tasks: Vec<LabeledSample>,
}

impl MultiTaskSample {
    pub fn new(tasks: Vec<LabeledSample>) -> Result<Self> {
        let s = MultiTaskSample { tasks };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.tasks.len()
    }

    pub fn m(&self) -> usize {
        self.tasks.first().map_or(0, LabeledSample::len)
    }

    pub fn validate(&self) -> Result<()> {
        let m = match self.tasks.first() {
            Some(t) => t.len(),
            None => return Err(Error::input("a multi-task sample needs n >= 1 tasks")),
        };
        let dim = self.tasks[0].dim();
        for (i, t) in self.tasks.iter().enumerate() {
            t.validate()?;
            if t.len() != m {
                return Err(Error::input(format!(
                    "task {i} has {} examples, task 0 has {m}",
                    t.len()
                )));
            }
            if t.dim() != dim {
                return Err(Error::input(format!("task {i} has a different input dimension")));
            }
        }
        Ok(())
    }

    /// Reads `task_id, x_1, ..., x_d, label` rows. A leading header row and
    /// `#` comments are allowed. Tasks are ordered by id.
    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut tasks: BTreeMap<u64, LabeledSample> = BTreeMap::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Parse(e.to_string()))?;
            if record.len() < 3 {
                return Err(Error::Parse(format!(
                    "row {row}: expected task_id, features..., label"
                )));
            }
            let task: u64 = match record[0].parse() {
                Ok(t) => t,
                Err(_) if row == 0 => continue,
                Err(_) => {
                    return Err(Error::Parse(format!("row {row}: bad task id {:?}", &record[0])))
                }
            };
            let nums = (1..record.len())
                .map(|i| record[i].parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            let (label, x) = nums.split_last().expect("at least two numeric fields");
            let entry = tasks.entry(task).or_insert_with(|| LabeledSample {
                points: Vec::new(),
                labels: Vec::new(),
            });
            entry.points.push(x.to_vec());
            entry.labels.push(*label);
        }
        MultiTaskSample::new(tasks.into_values().collect())
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (t, task) in self.tasks.iter().enumerate() {
            for (x, y) in task.points.iter().zip(&task.labels) {
                let mut rec = Vec::with_capacity(x.len() + 2);
                rec.push(t.to_string());
                rec.extend(x.iter().map(|v| format!("{v:?}")));
                rec.push(format!("{}", *y as i64));
                w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

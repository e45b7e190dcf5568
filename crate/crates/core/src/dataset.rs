use crate::error::{usage, Error, Result};
use crate::metric::Metric;
use crate::scalar::{ElemKind, Element};

/// `N` fixed-dimensional vectors stored row-major in one contiguous block,
/// bound to the metric used to compare them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    data: Vec<T>,
    dims: usize,
    metric: Metric,
}

impl<T: Element> Dataset<T> {
    pub fn new(data: Vec<T>, dims: usize, metric: Metric) -> Result<Self> {
        if dims == 0 {
            if !data.is_empty() {
                return Err(usage("zero-dimensional dataset with nonempty data"));
            }
        } else if data.len() % dims != 0 {
            return Err(Error::Format(format!(
                "data length {} is not a multiple of dims {dims}",
                data.len()
            )));
        }
        Ok(Self { data, dims, metric })
    }

    pub fn from_rows(rows: &[Vec<T>], metric: Metric) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            if row.len() != dims {
                return Err(Error::DimensionMismatch { expected: dims, actual: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(data, dims, metric)
    }

    /// Row-wise concatenation; all parts must agree on dims and metric.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset<T>>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some(first) = iter.next() else {
            return Err(usage("cannot concatenate zero datasets"));
        };
        let mut out = first.clone();
        for part in iter {
            if part.dims != out.dims {
                return Err(Error::DimensionMismatch { expected: out.dims, actual: part.dims });
            }
            if part.metric != out.metric {
                return Err(usage("cannot concatenate datasets with different metrics"));
            }
            out.data.extend_from_slice(&part.data);
        }
        Ok(out)
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dims == 0 {
            0
        } else {
            self.data.len() / self.dims
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn element_kind(&self) -> ElemKind {
        T::KIND
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.dims.max(1))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Rows `range` copied into a new dataset.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            data: self.data[range.start * self.dims..range.end * self.dims].to_vec(),
            dims: self.dims,
            metric: self.metric,
        }
    }

    /// Rows gathered in the order given by `indices`.
    pub fn gather(&self, indices: &[u32]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            data.extend_from_slice(self.row(i as usize));
        }
        Self { data, dims: self.dims, metric: self.metric }
    }

    pub fn view(&self) -> DatasetView<'_, T> {
        DatasetView { data: &self.data, dims: self.dims, metric: self.metric }
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f32 {
        self.metric.eval(self.row(a), self.row(b))
    }
}

/// Borrowed, read-only window onto dataset rows.
#[derive(Clone, Copy, Debug)]
pub struct DatasetView<'a, T> {
    data: &'a [T],
    dims: usize,
    metric: Metric,
}

impl<'a, T: Element> DatasetView<'a, T> {
    pub fn new(data: &'a [T], dims: usize, metric: Metric) -> Result<Self> {
        if dims == 0 || data.len() % dims != 0 {
            return Err(usage(format!("bad view shape: {} elements, dims {dims}", data.len())));
        }
        Ok(Self { data, dims, metric })
    }

    #[inline]
    pub fn len(&self) -> usize {
        if self.dims == 0 {
            0
        } else {
            self.data.len() / self.dims
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [T] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    /// Rows `range` of this view.
    pub fn rows(&self, range: std::ops::Range<usize>) -> DatasetView<'a, T> {
        DatasetView {
            data: &self.data[range.start * self.dims..range.end * self.dims],
            dims: self.dims,
            metric: self.metric,
        }
    }

    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f32 {
        self.metric.eval(self.row(a), self.row(b))
    }
}

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

/// One observation, as indices into the bound spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Obs {
    pub part: usize,
    pub resp: usize,
    /// Covariate cell; 0 when the spec has no covariates.
    pub cell: usize,
}

/// Observations of (Z, R, W) bound to a model layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    offsets: Vec<usize>,
    inputs: Vec<String>,
    responses: Vec<Vec<String>>,
    covariate_names: Vec<String>,
    cell_labels: Vec<Vec<String>>,
    obs: Vec<Obs>,
}

impl Dataset {
    pub fn new(spec: &ModelSpec, obs: Vec<Obs>) -> Result<Dataset> {
        let cell_labels = spec.covariate_cells();
        if obs.is_empty() {
            return Err(Error::InvalidData("dataset has no observations".into()));
        }
        for o in &obs {
            if o.part >= spec.k() || o.resp >= spec.responses[o.part].len() || o.cell >= cell_labels.len() {
                return Err(Error::InvalidData(format!("observation {o:?} does not fit the model layout")));
            }
        }
        Ok(Dataset {
            offsets: spec.offsets(),
            inputs: spec.inputs.clone(),
            responses: spec.responses.clone(),
            covariate_names: spec.covariates.iter().map(|c| c.name.clone()).collect(),
            cell_labels,
            obs,
        })
    }

    /// Reads a CSV with columns `z`, `r` and one column per covariate.
    pub fn read_csv<R: Read>(reader: R, spec: &ModelSpec) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidData(format!("missing column `{name}`")))
        };
        let zc = col("z")?;
        let rc = col("r")?;
        let wc: Vec<usize> = spec.covariates.iter().map(|c| col(&c.name)).collect::<Result<_>>()?;
        let cells: HashMap<Vec<String>, usize> = spec
            .covariate_cells()
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        let mut obs = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let z = &rec[zc];
            let part = spec
                .input_index(z)
                .ok_or_else(|| Error::InvalidData(format!("row {row}: unknown z `{z}`")))?;
            let r = &rec[rc];
            let resp = spec
                .response_index(part, r)
                .ok_or_else(|| Error::InvalidData(format!("row {row}: unknown r `{r}` at z `{z}`")))?;
            let key: Vec<String> = wc.iter().map(|&c| rec[c].to_owned()).collect();
            let cell = *cells
                .get(&key)
                .ok_or_else(|| Error::InvalidData(format!("row {row}: unknown covariate values {key:?}")))?;
            obs.push(Obs { part, resp, cell });
        }
        Dataset::new(spec, obs)
    }

    pub fn load_csv(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?, spec)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["z".to_owned(), "r".to_owned()];
        header.extend(self.covariate_names.iter().cloned());
        w.write_record(&header)?;
        for o in &self.obs {
            let mut rec = vec![self.inputs[o.part].clone(), self.responses[o.part][o.resp].clone()];
            rec.extend(self.cell_labels[o.cell].iter().cloned());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.obs.len()
    }

    pub fn obs(&self) -> &[Obs] {
        &self.obs
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn k(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_vertices(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_labels.len()
    }

    /// The same observations with covariates ignored.
    pub fn pooled(&self) -> Dataset {
        Dataset {
            covariate_names: Vec::new(),
            cell_labels: vec![Vec::new()],
            obs: self.obs.iter().map(|o| Obs { cell: 0, ..*o }).collect(),
            ..self.clone()
        }
    }

    /// Observations in one covariate cell, re-indexed as a covariate-free sample.
    pub fn restrict_to_cell(&self, cell: usize) -> Result<Dataset> {
        let obs: Vec<Obs> = self
            .obs
            .iter()
            .filter(|o| o.cell == cell)
            .map(|o| Obs { cell: 0, ..*o })
            .collect();
        if obs.is_empty() {
            return Err(Error::EmptyConditioningCell(vec![format!("W={}", self.cell_label(cell))]));
        }
        Ok(Dataset {
            covariate_names: Vec::new(),
            cell_labels: vec![Vec::new()],
            obs,
            ..self.clone()
        })
    }

    pub(crate) fn category(&self, o: &Obs) -> usize {
        o.cell * self.n_vertices() + self.offsets[o.part] + o.resp
    }

    pub(crate) fn z_cell(&self, o: &Obs) -> usize {
        o.cell * self.k() + o.part
    }

    fn cell_label(&self, cell: usize) -> String {
        self.cell_labels[cell].join(",")
    }

    pub(crate) fn z_cell_label(&self, zc: usize) -> String {
        let (w, z) = (zc / self.k(), zc % self.k());
        if self.covariate_names.is_empty() {
            format!("Z={}", self.inputs[z])
        } else {
            format!("Z={},W={}", self.inputs[z], self.cell_label(w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::pm_design_spec;

    #[test]
    fn csv_round_trip() {
        let spec = pm_design_spec();
        let obs = vec![
            Obs { part: 0, resp: 1, cell: 0 },
            Obs { part: 3, resp: 0, cell: 1 },
        ];
        let d = Dataset::new(&spec, obs).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "z,r,W\n\"(0,0)\",1,0\n\"(1,1)\",0,1\n");
        assert_eq!(Dataset::read_csv(text.as_bytes(), &spec).unwrap(), d);
    }

    #[test]
    fn bad_labels_are_rejected() {
        let spec = pm_design_spec();
        let err = Dataset::read_csv("z,r,W\n\"(0,0)\",2,0\n".as_bytes(), &spec).unwrap_err();
        assert!(matches!(err, Error::InvalidData(_)));
        assert!(Dataset::read_csv("z,W\n".as_bytes(), &spec).is_err());
        assert!(Dataset::new(&spec, Vec::new()).is_err());
    }
}

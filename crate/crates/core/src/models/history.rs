use serde::{Deserialize, Serialize};

use crate::plot::line_panels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

/// Per-epoch training curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_acc,train_loss,val_acc,val_loss\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_acc, r.train_loss, r.val_acc, r.val_loss
            ));
        }
        s
    }

    /// Accuracy and loss panels, train and validation curves in each.
    pub fn to_svg(&self, title: &str) -> String {
        let col = |f: fn(&EpochRecord) -> f64| self.records.iter().map(f).collect::<Vec<f64>>();
        let (ta, va) = (col(|r| r.train_acc), col(|r| r.val_acc));
        let (tl, vl) = (col(|r| r.train_loss), col(|r| r.val_loss));
        let acc_title = format!("{title}: accuracy");
        let loss_title = format!("{title}: loss");
        line_panels(&[
            (acc_title.as_str(), vec![("train", ta.as_slice()), ("validation", va.as_slice())]),
            (loss_title.as_str(), vec![("train", tl.as_slice()), ("validation", vl.as_slice())]),
        ])
    }
}

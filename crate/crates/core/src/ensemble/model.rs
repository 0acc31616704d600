use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    BinaryClassification,
    MulticlassClassification,
}

impl Task {
    pub fn is_classification(self) -> bool {
        !matches!(self, Task::Regression)
    }
}

/// How tree outputs are combined before the decision function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    /// Random-forest voting. Stored internally as one-hot class logits so that it
    /// reduces with the same class-wise sum as boosted models.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind<T, V> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        value: V,
        class_id: usize,
    },
}

/// A node in row-table form. `left`/`right` are indices into [`Tree::nodes`]; `id` is
/// the identifier the node carried in the source document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode<T, V> {
    pub id: u32,
    #[serde(flatten)]
    pub kind: NodeKind<T, V>,
}

impl<T, V> TreeNode<T, V> {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T, V> {
    pub tree_id: usize,
    pub class_id: usize,
    pub root: usize,
    pub nodes: Vec<TreeNode<T, V>>,
}

impl<T: PartialOrd + Copy, V> Tree<T, V> {
    /// Index of the leaf reached by `x`; left iff `x[feature] < threshold`.
    pub fn leaf_index(&self, x: &[T]) -> usize {
        let mut idx = self.root;
        loop {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { .. } => return idx,
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }
}

impl<T, V> Tree<T, V> {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((idx, d)) = stack.pop() {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { .. } => best = best.max(d),
                NodeKind::Split { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
            }
        }
        best
    }

    /// Leaves in left-first depth-first order, which is also the CAM row order.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.root];
        while let Some(idx) = stack.pop() {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { .. } => out.push(idx),
                NodeKind::Split { left, right, .. } => {
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        out
    }

    pub fn leaf(&self, idx: usize) -> Option<(&V, usize)> {
        match &self.nodes[idx].kind {
            NodeKind::Leaf { value, class_id } => Some((value, *class_id)),
            NodeKind::Split { .. } => None,
        }
    }
}

/// Tree ensemble generic over the threshold type `T` and leaf value type `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble<T, V> {
    pub task: Task,
    /// 1 for regression and binary classification.
    pub n_classes: usize,
    pub n_features: usize,
    pub reduction: Reduction,
    /// Binary decision threshold applied to the summed logit.
    pub decision_threshold: f64,
    pub trees: Vec<Tree<T, V>>,
}

impl<T, V> TreeEnsemble<T, V> {
    pub fn n_leaves(&self) -> usize {
        self.trees.iter().map(Tree::n_leaves).sum()
    }

    pub fn max_leaves(&self) -> usize {
        self.trees.iter().map(Tree::n_leaves).max().unwrap_or(0)
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    pub fn tree(&self, tree_id: usize) -> Option<&Tree<T, V>> {
        self.trees.iter().find(|t| t.tree_id == tree_id)
    }
}

/// Floating-point model as loaded from the interchange format.
pub type Ensemble = TreeEnsemble<f64, f64>;

use evomg_core::grammar::{ComponentMenu, Grammar, TreeNode};
use evomg_core::reference_vcycle;

fn height(n: &TreeNode) -> usize {
    1 + n.children.iter().map(height).max().unwrap_or(0)
}

fn main() {
    let g = Grammar::new(5, ComponentMenu::standard()).unwrap();
    for (nu1, nu2) in [(0usize, 1usize), (2, 2), (3, 3)] {
        let t = reference_vcycle(&g, nu1, nu2, 1.25).unwrap();
        println!(
            "V({nu1},{nu2}): height {} sexp_len {}",
            height(&t.root) - 1,
            t.to_sexp().len()
        );
    }
}

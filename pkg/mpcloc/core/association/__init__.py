from .models import (
    AssocParams,
    MuMode,
    Association,
    AssociationScore,
    association_cost,
    cost_matrix,
    associate,
    associate_with_fit,
    screen_pairs,
    associate_by_delay_sort,
    evaluate_association,
)

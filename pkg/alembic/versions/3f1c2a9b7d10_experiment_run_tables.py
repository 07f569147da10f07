"""Experiment run tables

Revision ID: 3f1c2a9b7d10
Revises: 
Create Date: 2026-10-17 10:12:03.114207

"""
from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision: str = '3f1c2a9b7d10'
down_revision: Union[str, Sequence[str], None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    """Upgrade schema."""
    op.create_table('experiment_runs',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('kind', sa.Enum('order_preservation', 'erm_sweep', name='runkind'), nullable=False),
    sa.Column('status', sa.Enum('running', 'completed', 'failed', name='runstatus'), nullable=False),
    sa.Column('parameters', sa.Text(), nullable=False),
    sa.Column('output_dir', sa.String(length=500), nullable=True),
    sa.Column('error', sa.Text(), nullable=True),
    sa.Column('created_at', sa.DateTime(), nullable=True),
    sa.Column('finished_at', sa.DateTime(), nullable=True),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_experiment_runs_id'), 'experiment_runs', ['id'], unique=False)
    op.create_table('affinity_summaries',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('objective', sa.String(length=50), nullable=False),
    sa.Column('gamma', sa.Float(), nullable=False),
    sa.Column('draws', sa.Integer(), nullable=False),
    sa.Column('slope', sa.Float(), nullable=False),
    sa.Column('intercept', sa.Float(), nullable=False),
    sa.Column('r_squared', sa.Float(), nullable=False),
    sa.Column('spearman_rho', sa.Float(), nullable=True),
    sa.Column('predicted_slope', sa.Float(), nullable=False),
    sa.Column('predicted_intercept', sa.Float(), nullable=True),
    sa.Column('slope_se', sa.Float(), nullable=True),
    sa.Column('intercept_se', sa.Float(), nullable=True),
    sa.Column('low_confidence', sa.Boolean(), nullable=True),
    sa.ForeignKeyConstraint(['run_id'], ['experiment_runs.id'], ),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_affinity_summaries_id'), 'affinity_summaries', ['id'], unique=False)
    op.create_table('sweep_rows',
    sa.Column('id', sa.Integer(), nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('gamma', sa.Float(), nullable=False),
    sa.Column('loss', sa.String(length=50), nullable=False),
    sa.Column('seed', sa.Integer(), nullable=False),
    sa.Column('metric', sa.String(length=20), nullable=False),
    sa.Column('value', sa.Float(), nullable=True),
    sa.Column('status', sa.String(length=10), nullable=False),
    sa.Column('error', sa.Text(), nullable=True),
    sa.Column('source', sa.String(length=100), nullable=False),
    sa.ForeignKeyConstraint(['run_id'], ['experiment_runs.id'], ),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_sweep_rows_id'), 'sweep_rows', ['id'], unique=False)


def downgrade() -> None:
    """Downgrade schema."""
    op.drop_index(op.f('ix_sweep_rows_id'), table_name='sweep_rows')
    op.drop_table('sweep_rows')
    op.drop_index(op.f('ix_affinity_summaries_id'), table_name='affinity_summaries')
    op.drop_table('affinity_summaries')
    op.drop_index(op.f('ix_experiment_runs_id'), table_name='experiment_runs')
    op.drop_table('experiment_runs')

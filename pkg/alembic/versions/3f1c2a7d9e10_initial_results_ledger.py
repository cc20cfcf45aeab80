"""Initial results ledger - run and metric tables

Revision ID: 3f1c2a7d9e10
Revises: 
Create Date: 2026-10-19 10:12:03.118204

"""
from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision = '3f1c2a7d9e10'
down_revision = None
branch_labels = None
depends_on = None


def upgrade() -> None:
    op.create_table('run',
    sa.Column('id', sa.Integer(), autoincrement=True, nullable=False),
    sa.Column('scenario', sa.String(), nullable=False),
    sa.Column('kind', sa.String(), nullable=False),
    sa.Column('seed', sa.Integer(), nullable=False),
    sa.Column('out_dir', sa.Text(), nullable=False),
    sa.Column('sweep_id', sa.String(), nullable=True),
    sa.Column('sweep_key', sa.String(), nullable=True),
    sa.Column('sweep_value', sa.Float(), nullable=True),
    sa.Column('created_on', sa.Text(), nullable=False),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_run_sweep_id'), 'run', ['sweep_id'], unique=False)
    op.create_table('metric',
    sa.Column('id', sa.Integer(), autoincrement=True, nullable=False),
    sa.Column('run_id', sa.Integer(), nullable=False),
    sa.Column('name', sa.String(), nullable=False),
    sa.Column('value', sa.Float(), nullable=True),
    sa.ForeignKeyConstraint(['run_id'], ['run.id'], ),
    sa.PrimaryKeyConstraint('id')
    )
    op.create_index(op.f('ix_metric_run_id'), 'metric', ['run_id'], unique=False)


def downgrade() -> None:
    op.drop_index(op.f('ix_metric_run_id'), table_name='metric')
    op.drop_table('metric')
    op.drop_index(op.f('ix_run_sweep_id'), table_name='run')
    op.drop_table('run')
